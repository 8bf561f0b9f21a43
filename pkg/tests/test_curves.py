import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carnot.curves import (
    CurveFamily,
    HorizontalCurve,
    cc_distance_upper,
    horizontal_length,
    line_integral,
    polygonal_length,
    read_family,
    segment_curve,
    write_family,
)
from carnot.families import bounding_box, curve_from_points, fiber_family, radial_segments, vertical_segments
from carnot.grids import Grid, read_grid_dump, write_grid_dump
from carnot.groups import GroupInputError, abelian, heisenberg

H1 = heisenberg(1)
R2 = abelian(2)


def circle(samples):
    t = np.linspace(0, 2 * np.pi, samples)
    pts = np.stack([np.cos(t), np.sin(t)], -1)
    tan = np.stack([-np.sin(t), np.cos(t)], -1)
    return HorizontalCurve(R2, t, pts, tan)


def test_fiber_length_is_parameter_length():
    c = segment_curve(H1, [0.2, 0.5, -0.1], [1.0, 0.0], 0.0, 3.0)
    assert horizontal_length(c) == pytest.approx(3.0, rel=1e-14)
    assert c.consistency_residual() < 1e-9


def test_circle_length():
    assert horizontal_length(circle(257)) == pytest.approx(2 * np.pi, rel=1e-12)
    chords = [polygonal_length(circle(n)) for n in (9, 17, 33, 65, 129)]
    assert np.all(np.diff(chords) > 0)
    assert chords[-1] < 2 * np.pi
    assert chords[-1] == pytest.approx(2 * np.pi, rel=1e-3)


def test_polygonal_length_examples():
    seg = HorizontalCurve(H1, [0.0, 1.0], [[0, 0, 0], [1, 0, 0]])
    assert polygonal_length(seg) == pytest.approx(1.0, abs=1e-15)
    flat = HorizontalCurve(H1, [0.0, 1.0], [[0.3, 0.1, 0.2], [0.3, 0.1, 0.2]])
    assert polygonal_length(flat) == 0


def test_polygonal_refines_monotonically_on_h1():
    # curve t -> (cos t, sin t, z(t)) lifted horizontally: z' = 2(y x' - x y') = -2
    def lifted(n):
        t = np.linspace(0, np.pi, n)
        pts = np.stack([np.cos(t), np.sin(t), -2 * t], -1)
        return curve_from_points(H1, t, pts)

    lengths = [polygonal_length(lifted(n)) for n in (17, 33, 65, 129, 257)]
    assert np.all(np.diff(lengths) >= -1e-12)
    assert lengths[-1] == pytest.approx(np.pi, rel=2e-3)
    assert horizontal_length(lifted(257)) == pytest.approx(np.pi, rel=1e-3)


def test_curve_validation():
    with pytest.raises(GroupInputError):
        HorizontalCurve(R2, [0.0], [[0, 0]])
    with pytest.raises(GroupInputError):
        HorizontalCurve(R2, [0.0, 0.0], [[0, 0], [1, 1]])
    with pytest.raises(GroupInputError):
        HorizontalCurve(R2, [0.0, 1.0], [[0, 0], [1, 1]], [[1, 1, 1], [1, 1, 1]])
    with pytest.raises(GroupInputError):
        horizontal_length(HorizontalCurve(R2, [0.0, 1.0], [[0, 0], [1, 1]]))
    with pytest.raises(GroupInputError):
        CurveFamily(R2, [])
    with pytest.raises(GroupInputError):
        CurveFamily(R2, [segment_curve(H1, [0, 0, 0], [1, 0], 0, 1)])


def test_line_integral():
    c = segment_curve(R2, [0.3, 0.0], [0.0, 1.0], 0.0, 2.5)
    assert line_integral(lambda p: np.ones(len(p)), c) == pytest.approx(horizontal_length(c))
    assert line_integral(lambda p: np.zeros(len(p)), c) == 0
    assert line_integral(lambda p: np.full(len(p), 1 / 2.5), c) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(GroupInputError):
        line_integral(lambda p: -np.ones(len(p)), c)


@pytest.mark.parametrize("p, q, d", [([1, 2], [4, 6], 5.0), ([0, 0], [0, 0], 0.0)])
def test_cc_distance_abelian_exact(p, q, d):
    assert cc_distance_upper(R2, p, q).length == pytest.approx(d, abs=1e-15)


def test_cc_distance_h1_fiber():
    est = cc_distance_upper(H1, [0, 0, 0], [1, 0, 0])
    assert est.length == pytest.approx(1.0, abs=1e-3)
    assert est.length >= 1.0 - 1e-9  # x-projection is a lower bound


def test_cc_distance_rejects_zero_budget():
    with pytest.raises(GroupInputError):
        cc_distance_upper(H1, [0, 0, 0], [1, 0, 0], budget=0)


def test_cc_distance_comparable_to_gauge():
    rng = np.random.default_rng(1)
    ratios = []
    for _ in range(6):
        p, q = rng.uniform(-1, 1, (2, 3))
        d = cc_distance_upper(H1, p, q, budget=2).length
        ratios.append(d / H1.quasimetric(q, p))
    ratios = np.array(ratios)
    assert np.all(np.isfinite(ratios)) and ratios.min() > 0
    # the gauge lower-bounds the sub-Riemannian distance up to a constant, and the
    # explicit closing path bounds it above by a constant multiple
    assert 0.5 < ratios.min() and ratios.max() < 4.0


@settings(max_examples=10, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_cc_distance_never_below_first_layer_projection(x, y, z):
    d = cc_distance_upper(H1, [0, 0, 0], [x, y, z], budget=1).length
    assert d >= np.hypot(x, y) - 1e-9


def test_family_generators():
    fam = vertical_segments(R2, 2.0, 1.0, 8)
    assert len(fam) == 8 and fam.descriptor["kind"] == "vertical"
    assert all(horizontal_length(c) == pytest.approx(1.0) for c in fam)
    rad = radial_segments(R2, 1.0, np.e, 16)
    assert all(horizontal_length(c) == pytest.approx(np.e - 1) for c in rad)
    assert np.allclose(np.linalg.norm(rad.curves[3].points[-1]), np.e)
    fib = fiber_family(H1, 1, 1.0, [-0.5, -0.5], [0.5, 0.5], (3, 4))
    assert len(fib) == 12
    assert all(c.consistency_residual() < 1e-9 for c in fib)
    assert np.allclose([c.points[0, 1] for c in fib], 0)
    lo, hi = bounding_box(fib)
    assert np.all(lo < hi)
    with pytest.raises(GroupInputError):
        vertical_segments(H1, 1.0, 1.0, 4)
    with pytest.raises(GroupInputError):
        radial_segments(R2, 2.0, 1.0, 4)


def test_curve_from_points_recovers_tangents():
    c = segment_curve(H1, [0.1, 0.2, 0.3], [0.6, 0.8], 0.0, 1.0)
    rebuilt = curve_from_points(H1, c.t, c.points)
    assert np.allclose(rebuilt.tangents, c.tangents, atol=1e-12)


def test_family_round_trip(tmp_path):
    fam = fiber_family(H1, 0, 1.0, [-0.2, -0.2], [0.2, 0.2], 2, samples=9)
    path = tmp_path / "fam.jsonl"
    write_family(path, fam)
    back = read_family(path, H1)
    assert len(back) == len(fam)
    for a, b in zip(fam, back):
        assert np.array_equal(a.points, b.points) and np.array_equal(a.tangents, b.tangents)


def test_grid_basics(tmp_path):
    g = Grid((0.0, -1.0), (2.0, 1.0), (4, 8))
    assert g.cell_volume == pytest.approx(0.125)
    assert g.centers().shape == (4, 8, 2)
    assert g.locate([[0.1, -0.9], [5.0, 0.0]]).tolist() == [0, -1]
    m = g.mask(lambda p: p[:, 0] < 1.0)
    assert m.sum() == 16
    assert g.refined(2).shape == (8, 16)
    values = np.arange(32.0).reshape(4, 8) / 7
    write_grid_dump(tmp_path / "g.grid", g, values)
    g2, v2 = read_grid_dump(tmp_path / "g.grid")
    assert g2 == g and np.array_equal(v2, values)
    with pytest.raises(ValueError):
        Grid((0.0,), (0.0,), (3,))
