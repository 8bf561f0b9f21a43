import numpy as np
import pytest

from carnot.capacity import Condenser, annulus_condenser, gauge_ring_condenser, p_capacity, slab_condenser
from carnot.checks import (
    DegeneratePotentialError,
    dilate_condenser,
    dilate_pair,
    dilation_scaling_check,
    equality_check,
    lemma2_bound_check,
    lemma2_ratio,
    segment_pair,
    trace_flow_lines,
)
from carnot.grids import Grid
from carnot.groups import GroupInputError, abelian, heisenberg

from oracles import planar_annulus_capacity, rectangle_modulus

R2 = abelian(2)
R3 = abelian(3)
H1 = heisenberg(1)


def rectangle_condenser(res):
    # plates are the left and right sides of a 1 x 2 box, so cap = 2 / 1
    h = 1.0 / res
    grid = Grid((-h / 2, 0.0), (1.0 + h / 2, 2.0), (res + 1, 2 * res))
    return Condenser.from_predicates(R2, grid, lambda x: x[..., 0] < h / 2, lambda x: x[..., 0] > 1 - h / 2)


def test_equality_planar_annulus():
    rep = equality_check(annulus_condenser(R2, 1.0, np.e, 96))
    assert rep.capacity == pytest.approx(planar_annulus_capacity(1.0, np.e, 2.0), rel=0.03)
    assert rep.gap <= 0.05
    assert rep.converged and rep.curves > 0
    assert "low" in rep.bias


def test_equality_rectangle():
    rep = equality_check(rectangle_condenser(48))
    assert rep.capacity == pytest.approx(rectangle_modulus(2.0, 1.0), rel=1e-8)
    assert rep.modulus == pytest.approx(rectangle_modulus(2.0, 1.0), rel=0.05)
    assert rep.gap <= 0.05


def test_flow_lines_join_plates():
    cond = annulus_condenser(R2, 1.0, 2.0, 48)
    cap = p_capacity(cond, 2.0)
    fam, dropped = trace_flow_lines(cond, cap.potential, seed=4)
    assert dropped >= 0 and len(fam) > 0
    ends = np.array([c.points[-1] for c in fam])
    assert np.all(cond.f0.ravel()[cond.grid.locate(ends)])
    # starts sit on faces of F1, within one cell of the inner disk
    r0 = np.array([np.linalg.norm(c.points[0]) for c in fam])
    assert np.all(r0 < 1.0 + np.linalg.norm(cond.grid.spacing))
    again, _ = trace_flow_lines(cond, cap.potential, seed=4)
    assert all(np.array_equal(a.points, b.points) for a, b in zip(fam, again))


def test_flat_potential_is_degenerate():
    cond = annulus_condenser(R2, 1.0, 2.0, 24)
    with pytest.raises(DegeneratePotentialError):
        trace_flow_lines(cond, np.zeros(cond.grid.shape))


def test_dilate_condenser_transports_masks():
    cond = gauge_ring_condenser(H1, 0.5, 1.0, 12)
    big = dilate_condenser(cond, 2.0)
    assert np.array_equal(big.f0, cond.f0) and np.array_equal(big.f1, cond.f1)
    assert np.allclose(np.array(big.grid.upper), np.array(cond.grid.upper) * [2, 2, 4])
    # dilated plates are still gauge balls: the mask test agrees with the dilated gauge
    c = big.grid.flat_centers()[big.f1.ravel()]
    assert np.all(H1.gauge(c) <= 2 * 0.5 * (1 + 1e-12))
    with pytest.raises(GroupInputError):
        dilate_condenser(cond, 0.0)


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_cube_scaling_factor(t):
    rep = dilation_scaling_check(slab_condenser(R3, [1.0, 1.0, 1.0], 16), 2.0, ts=(t,))
    assert rep.exponent == 1
    assert rep.rows[0]["value"] == pytest.approx(t * rep.base, rel=0.03)
    assert rep.passed


def test_planar_conformal_invariance():
    rep = dilation_scaling_check(annulus_condenser(R2, 1.0, np.e, 48), 2.0, tol=0.02)
    assert rep.exponent == 0 and rep.passed


def test_h1_ring_invariance_p4():
    rep = dilation_scaling_check(gauge_ring_condenser(H1, 0.5, 1.0, 12), 4.0, tol=0.05)
    assert rep.exponent == 0
    assert rep.passed, rep.rows


def test_segment_pair_geometry():
    pair = segment_pair(R2, 1.0, 0.5)
    assert pair.diameter() == pytest.approx(1.0, rel=1e-12)
    grid, gmask, f1 = pair.at_resolution(24)
    assert gmask.any() and f1.any() and not np.any(f1 & ~gmask)
    h1 = segment_pair(H1, 1.0, 0.5)
    assert h1.diameter() == pytest.approx(1.0, rel=1e-12)
    assert dilate_pair(h1, 2.0).diameter() == pytest.approx(2.0, rel=1e-12)


def test_segment_ratio_dilation_invariant_planar():
    # for p = nu = 2 every factor of the ratio is dilation invariant
    pair = segment_pair(R2, 1.0, 0.5)
    a = lemma2_ratio(pair, 2.0, 24)
    b = lemma2_ratio(dilate_pair(pair, 3.0), 2.0, 24)
    assert a["ratio"] > 0
    assert b["ratio"] == pytest.approx(a["ratio"], rel=1e-6)


def test_segment_neighborhood_hypothesis_enforced():
    pair = segment_pair(R2, 1.0, 0.5)
    with pytest.raises(GroupInputError, match="c0"):
        lemma2_ratio(pair, 2.0, 16, c0=0.1)
    with pytest.raises(GroupInputError):
        lemma2_ratio(segment_pair(H1, 1.0, 0.5), 2.5, 8)


def test_segment_suite_positive_and_stable():
    pairs = [segment_pair(R2, 1.0, 0.5), segment_pair(R2, 0.5, 0.5, k=1)]
    rep = lemma2_bound_check(pairs, 2.0, res=24)
    assert rep.minimum > 0 and rep.refined_minimum > 0
    assert rep.stability <= 0.2
    assert rep.passed
    skipped = lemma2_bound_check(pairs, 2.0, res=16, c0=0.1)
    assert skipped.minimum is None and len(skipped.skipped) == 2 and not skipped.passed
