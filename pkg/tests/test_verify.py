import numpy as np
import pytest

from carnot.families import vertical_segments
from carnot.foliation import FoliationSpec
from carnot.grids import Grid
from carnot.groups import GroupInputError, abelian, heisenberg
from carnot.maps import ContactMap, catalog_map, identity_map
from carnot.modulus import SolveOptions
from carnot.runner import build_family, default_families, family_grid
from carnot.verify import (
    VerificationRefused,
    acl_refinement,
    acl_transversal_check,
    change_of_variables_check,
    inverse_energy_check,
    matched_grid,
    pulled_spacing,
    verify_q_inequality,
)

from oracles import rectangle_modulus

H1 = heisenberg(1)
R2 = abelian(2)
UNIT_BOX = Grid.cube([0, 0, 0], [1, 1, 1], 16)


def test_identity_planar_equality():
    fam = vertical_segments(R2, 1.0, 1.0, 128)
    grid = Grid.cube([0, 0], [1, 1], 64)
    rep = verify_q_inequality(identity_map(R2), fam, grid, grid)
    assert rep.lhs == pytest.approx(rep.rhs, rel=1e-6)
    assert rep.near_equality and rep.passed


def test_planar_stretch_against_closed_forms():
    # the stretch (2, 1) pulls the unit square back to [0, 1/2] x [0, 1] and has K_O = 2
    fam = vertical_segments(R2, 1.0, 1.0, 256)
    phi = catalog_map(R2, "diag-stretch", a=2.0, b=1.0)
    rep = verify_q_inequality(phi, fam, Grid.cube([0, 0], [1, 1], 64))
    assert rep.lhs == pytest.approx(rectangle_modulus(0.5, 1.0), rel=0.03)
    assert rep.rhs == pytest.approx(2.0 * rectangle_modulus(1.0, 1.0), rel=0.03)
    assert rep.passed and not rep.conformal


@pytest.mark.parametrize("name, params", [("dilation", {"t": 0.7}), ("rotation", {"theta": 0.4})])
def test_h1_conformal_near_equality(name, params):
    spec = default_families(H1)[0]
    fam = build_family(H1, spec)
    phi = catalog_map(H1, name, **params)
    rep = verify_q_inequality(phi, fam, family_grid(H1, spec, 24, None))
    assert rep.conformal and rep.equality_tol == pytest.approx(0.02 + SolveOptions().gap_tol)
    assert rep.passed, rep.to_record()


def test_dilation_matched_spacing():
    phi = catalog_map(H1, "dilation", t=0.5)
    grid = Grid.cube([-1, -1, -1], [1, 1, 1], 8)
    # phi^-1 = delta_2, so axis i spacing scales by 2^{w_i}
    assert np.allclose(pulled_spacing(phi, grid), grid.spacing * [2, 2, 4])
    fam = vertical_segments(R2, 1.0, 1.0, 4)
    g = matched_grid(fam, [0.1, 0.1])
    assert np.allclose(g.spacing, 0.1)


def test_refuses_non_converged():
    fam = vertical_segments(R2, 1.0, 1.0, 64)
    with pytest.raises(VerificationRefused):
        verify_q_inequality(
            identity_map(R2), fam, Grid.cube([0, 0], [1, 1], 32), opts=SolveOptions(max_iter=1, gap_tol=1e-9)
        )


@pytest.mark.parametrize(
    "name, params, expect",
    [("identity", {}, 1.0), ("dilation", {"t": 0.8}, 0.8**4), ("diag-stretch", {"a": 2.0, "b": 1.0}, 16.0)],
)
def test_change_of_variables_examples(name, params, expect):
    rep = change_of_variables_check(catalog_map(H1, name, **params), UNIT_BOX)
    assert rep.domain_side == pytest.approx(expect, rel=1e-9)
    assert rep.image_side == pytest.approx(expect, rel=0.03)
    assert rep.passed


@pytest.mark.parametrize(
    "g, name, params",
    [(H1, "rotation", {"theta": 0.4}), (H1, "translation", {"by": [0.3, -0.2, 0.1]}), (R2, "radial-power", {"alpha": 2.0}), (R2, "radial-power", {"alpha": 0.5})],
)
def test_change_of_variables_catalog(g, name, params):
    grid = Grid.cube([0.2] * g.dim, [1.0] * g.dim, 48 if g is R2 else 16)
    rep = change_of_variables_check(catalog_map(g, name, **params), grid)
    assert rep.passed, rep.to_record()


def test_change_of_variables_refuses_non_injective():
    fold = ContactMap("fold", R2, {}, lambda p: np.abs(p), lambda q: q)
    with pytest.raises(VerificationRefused):
        change_of_variables_check(fold, Grid.cube([-1, -1], [1, 1], 8))


@pytest.mark.parametrize(
    "name, params, k, expect",
    [
        ("identity", {}, 0, 2.0),
        ("dilation", {"t": 0.6}, 1, 0.6 * 2.0),
        ("diag-stretch", {"a": 2.0, "b": 1.0}, 0, 2.0 * 2.0),
        ("diag-stretch", {"a": 2.0, "b": 3.0}, 1, 3.0 * 2.0),
    ],
)
def test_acl_examples(name, params, k, expect):
    rep = acl_transversal_check(catalog_map(H1, name, **params), FoliationSpec(k, M=1.0), sample_count=6)
    assert np.allclose(rep.variations, expect, rtol=1e-9)
    assert np.allclose(rep.integrals, expect, rtol=1e-9)
    assert rep.passed


def test_acl_error_halves_for_radial_power():
    phi = catalog_map(R2, "radial-power", alpha=2.0)
    spec = FoliationSpec(0, M=1.0)
    out = acl_refinement(phi, spec, steps=(16, 32, 64), sample_count=8)
    assert out["halves"]
    assert all(r >= 2.0 for r in out["reductions"])
    assert acl_transversal_check(phi, spec, sample_count=8, steps=64).passed


def test_acl_exact_maps_count_as_halving():
    out = acl_refinement(catalog_map(H1, "rotation", theta=0.3), FoliationSpec(0), steps=(8, 16), sample_count=4)
    assert out["halves"] and max(out["errors"]) < 1e-10


@pytest.mark.parametrize(
    "name, params, factor",
    [("identity", {}, 1.0), ("dilation", {"t": 0.5}, 2.0), ("diag-stretch", {"a": 2.0, "b": 1.0}, 1.0)],
)
def test_inverse_energy_examples(name, params, factor):
    rep = inverse_energy_check(catalog_map(H1, name, **params), [0, 0, 0], [1, 1, 1], resolutions=(4, 8))
    assert np.allclose(rep.energies, factor, rtol=1e-12)
    assert rep.passed and rep.finite and not rep.flagged


def test_inverse_energy_radial_power_stable():
    rep = inverse_energy_check(catalog_map(R2, "radial-power", alpha=2.0), [-1, -1], [1, 1], resolutions=(32, 64, 128))
    assert rep.finite and rep.stability <= 0.05


def test_inverse_energy_flags_blowup():
    blow = ContactMap(
        "blow", R2, {}, lambda p: p, lambda q: q, lambda p: np.broadcast_to(np.eye(2) * 1e-12, p.shape[:-1] + (2, 2)).copy()
    )
    rep = inverse_energy_check(blow, [0, 0], [1, 1], resolutions=(4, 8))
    assert rep.flagged and not rep.passed
    with pytest.raises(GroupInputError):
        inverse_energy_check(blow, [0, 0], [1, 1], resolutions=(4,))
