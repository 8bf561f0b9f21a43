import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from carnot.groups import GroupInputError, abelian, heisenberg
from carnot.horizontal import (
    DomainError,
    dilatation_from_differential,
    fd_differential,
    flow_commutator,
    formal_jacobian,
    frame_at,
    horizontal_differential,
    horizontal_gradient,
    jacobian_from_differential,
    operator_norm,
    outer_dilatation,
)
from carnot.maps import catalog_map, compose, translation

H1 = heisenberg(1)
R2 = abelian(2)

H1_MAPS = [
    ("identity", {}),
    ("translation", {"by": [0.3, -0.2, 0.1]}),
    ("dilation", {"t": 0.7}),
    ("rotation", {"theta": 0.4}),
    ("diag-stretch", {"a": 2.0, "b": 1.0}),
]
R2_MAPS = [
    ("translation", {"by": [0.3, -0.2]}),
    ("dilation", {"t": 1.3}),
    ("rotation", {"theta": -0.9}),
    ("diag-stretch", {"a": 0.5, "b": 3.0}),
    ("radial-power", {"alpha": 2.0}),
    ("radial-power", {"alpha": 0.5}),
]
ALL_MAPS = [(H1, n, p) for n, p in H1_MAPS] + [(R2, n, p) for n, p in R2_MAPS]
MAP_IDS = [f"{g.name}-{n}-{p.get('alpha', '')}" for g, n, p in ALL_MAPS]

h1_point = arrays(np.float64, 3, elements=st.floats(-2, 2))


def sample_points(g, count=20, seed=0):
    # keep away from the origin, where radial-power is singular
    rng = np.random.default_rng(seed)
    p = rng.uniform(-1.5, 1.5, (count, g.dim))
    p[:, 0] += np.where(p[:, 0] >= 0, 0.3, -0.3)
    return p


class StripDifferential:
    """Wrap a map so that only the finite-difference path is used."""

    def __init__(self, phi):
        self.forward = phi.forward


def test_frame_examples():
    assert np.array_equal(frame_at(H1, [0, 0, 0]), [[1, 0, 0], [0, 1, 0]])
    assert np.array_equal(frame_at(H1, [0, 1, 0])[0], [1, 0, 2])
    assert np.array_equal(frame_at(H1, [3, 0, 0])[1], [0, 1, -6])
    assert np.array_equal(frame_at(R2, [[4, 5], [1, 1]]), np.broadcast_to(np.eye(2), (2, 2, 2)))


@settings(max_examples=50, deadline=None)
@given(h1_point)
def test_commutator_is_minus_four_z(p):
    br = flow_commutator(H1, p, 0, 1, 1e-3)
    assert np.allclose(br, [0, 0, -4], atol=1e-6)


def test_abelian_commutator_vanishes():
    assert np.allclose(flow_commutator(R2, [0.3, 0.4], 0, 1, 1e-3), 0, atol=1e-9)


def test_gradient_examples():
    g = horizontal_gradient(H1, lambda q: q[..., 2], [1.0, 2.0, 3.0])
    assert np.allclose(g, [4.0, -2.0], atol=1e-8)
    assert np.array_equal(horizontal_gradient(H1, lambda q: np.full(q.shape[:-1], 7.0), [1, 2, 3]), [0, 0])
    f = lambda q: np.sin(q[..., 0]) * q[..., 1] ** 2  # noqa: E731
    p = np.array([0.4, -1.1])
    exact = [np.cos(0.4) * 1.21, 2 * np.sin(0.4) * -1.1]
    assert np.allclose(horizontal_gradient(R2, f, p, h=1e-4), exact, atol=1e-7)


def test_gradient_errors():
    with pytest.raises(GroupInputError):
        horizontal_gradient(H1, lambda q: q[..., 0], [0, 0, 0], h=0.0)

    def log_x(q):
        return np.log(q[..., 0])

    with pytest.raises(DomainError):
        horizontal_gradient(R2, log_x, [0.0, 1.0])

    def broken(q):
        raise RuntimeError("no")

    with pytest.raises(DomainError):
        horizontal_gradient(R2, broken, [1.0, 1.0])


def test_gradient_second_order():
    f = lambda q: np.exp(q[..., 0]) * np.cos(q[..., 1]) + q[..., 2] ** 2  # noqa: E731
    p = np.array([0.3, -0.4, 0.5])
    # exact: Xf = e^x cos y + 4 y z, Yf = -e^x sin y - 4 x z
    exact = np.array(
        [np.exp(0.3) * np.cos(-0.4) + 4 * -0.4 * 0.5, -np.exp(0.3) * np.sin(-0.4) - 4 * 0.3 * 0.5]
    )
    e1 = np.abs(horizontal_gradient(H1, f, p, h=1e-2) - exact).max()
    e2 = np.abs(horizontal_gradient(H1, f, p, h=5e-3) - exact).max()
    assert e1 / e2 >= 3.5


@pytest.mark.parametrize(
    "name, params, expect",
    [
        ("identity", {}, np.eye(2)),
        ("dilation", {"t": 0.7}, 0.7 * np.eye(2)),
        ("diag-stretch", {"a": 2.0, "b": 3.0}, np.diag([2.0, 3.0])),
    ],
)
def test_differential_examples(name, params, expect):
    phi = catalog_map(H1, name, **params)
    p = np.array([0.2, -0.5, 0.9])
    assert np.allclose(horizontal_differential(H1, phi, p), expect, atol=1e-14)
    assert np.allclose(fd_differential(H1, phi, p), expect, atol=1e-8)


@pytest.mark.parametrize("g, name, params", ALL_MAPS, ids=MAP_IDS)
def test_fd_matches_analytic_second_order(g, name, params):
    phi = catalog_map(g, name, **params)
    pts = sample_points(g, 8, seed=2)
    exact = horizontal_differential(g, phi, pts)
    e1 = np.abs(fd_differential(g, phi, pts, h=2e-2) - exact).max()
    e2 = np.abs(fd_differential(g, phi, pts, h=1e-2) - exact).max()
    if e1 < 1e-10:
        # the stencil is exact for maps that are affine along the flows
        assert e2 < 1e-10
    else:
        assert e1 / e2 >= 3.5
    assert np.allclose(fd_differential(g, phi, pts), exact, atol=1e-7)


def test_analytic_takes_precedence():
    phi = catalog_map(H1, "dilation", t=2.0)
    p = [0.1, 0.2, 0.3]
    assert np.array_equal(horizontal_differential(H1, phi, p, h=10.0), 2.0 * np.eye(2))
    assert not np.allclose(horizontal_differential(H1, StripDifferential(phi), p, h=10.0), 0.0)


@pytest.mark.parametrize(
    "pair",
    [
        (("rotation", {"theta": 0.4}), ("diag-stretch", {"a": 2.0, "b": 0.5})),
        (("dilation", {"t": 0.7}), ("translation", {"by": [0.3, -0.2, 0.1]})),
        (("diag-stretch", {"a": 1.5, "b": 1.0}), ("rotation", {"theta": -1.2})),
    ],
)
def test_chain_rule_and_jacobian_multiplicativity(pair):
    phi, psi = (catalog_map(H1, n, **p) for n, p in pair)
    comp = compose(phi, psi)
    pts = sample_points(H1, 10, seed=4)
    lhs = fd_differential(H1, comp, pts)
    rhs = horizontal_differential(H1, phi, psi.forward(pts)) @ horizontal_differential(H1, psi, pts)
    assert np.allclose(lhs, rhs, atol=1e-8)
    j = jacobian_from_differential(H1, lhs)
    j_split = formal_jacobian(H1, phi, psi.forward(pts)) * formal_jacobian(H1, psi, pts)
    assert np.allclose(j, j_split, atol=1e-8)


def test_chain_rule_radial_power_r2():
    phi = catalog_map(R2, "radial-power", alpha=2.0)
    psi = catalog_map(R2, "rotation", theta=0.3)
    pts = sample_points(R2, 10, seed=5)
    lhs = fd_differential(R2, compose(phi, psi), pts)
    rhs = horizontal_differential(R2, phi, psi.forward(pts)) @ horizontal_differential(R2, psi, pts)
    assert np.allclose(lhs, rhs, atol=1e-8)


def test_left_translation_invariance():
    phi = catalog_map(H1, "diag-stretch", a=2.0, b=0.5)
    lg = translation(H1, [1.0, -2.0, 0.5])
    pts = sample_points(H1, 10, seed=6)
    a = fd_differential(H1, compose(lg, phi), pts)
    b = fd_differential(H1, phi, pts)
    assert np.allclose(a, b, atol=1e-10)


def test_operator_norm_examples():
    assert operator_norm(np.diag([2.0, 3.0])) == pytest.approx(3.0, rel=1e-14)
    assert operator_norm(np.zeros((2, 2))) == 0
    c, s = np.cos(0.7), np.sin(0.7)
    assert operator_norm(np.array([[c, -s], [s, c]])) == pytest.approx(1.0, abs=1e-12)
    m = np.diag([1.0, 5.0, 2.0, 0.5])
    assert operator_norm(m) == pytest.approx(5.0, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-3, 3)))
def test_operator_norm_matches_svd(m):
    assert operator_norm(m) == pytest.approx(np.linalg.svd(m, compute_uv=False)[0], rel=1e-9, abs=1e-12)
    m2 = m[:2, :2]
    assert operator_norm(m2) == pytest.approx(np.linalg.svd(m2, compute_uv=False)[0], rel=1e-9, abs=1e-12)
    assert (operator_norm(m) == 0) == bool(np.all(m == 0))


@pytest.mark.parametrize(
    "name, params, jac",
    [("identity", {}, 1.0), ("dilation", {"t": 0.7}, 0.7**4), ("diag-stretch", {"a": 2.0, "b": 3.0}, 36.0)],
)
def test_jacobian_examples(name, params, jac):
    phi = catalog_map(H1, name, **params)
    assert formal_jacobian(H1, phi, [0.5, 0.1, -0.2]) == pytest.approx(jac, rel=1e-12)


def test_h1_jacobian_is_det_squared():
    m = np.array([[1.3, -0.4], [0.2, 0.9]])
    assert jacobian_from_differential(H1, m) == pytest.approx(np.linalg.det(m) ** 2, rel=1e-14)
    assert jacobian_from_differential(R2, m) == pytest.approx(np.linalg.det(m), rel=1e-14)


@pytest.mark.parametrize(
    "name, params, k",
    [("identity", {}, 1.0), ("dilation", {"t": 0.3}, 1.0), ("rotation", {"theta": 2.0}, 1.0), ("diag-stretch", {"a": 2.0, "b": 1.0}, 4.0)],
)
def test_outer_dilatation_examples(name, params, k):
    phi = catalog_map(H1, name, **params)
    d = outer_dilatation(H1, phi, [0.5, 0.1, -0.2])
    assert d.value == pytest.approx(k, rel=1e-12)
    assert not d.degenerate


def test_outer_dilatation_case_split():
    zero = dilatation_from_differential(H1, np.zeros((2, 2)))
    assert zero.value == 0 and not zero.degenerate
    sing = dilatation_from_differential(H1, np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert np.isinf(sing.value) and sing.degenerate


@pytest.mark.parametrize("g, name, params", ALL_MAPS, ids=MAP_IDS)
def test_outer_dilatation_at_least_one(g, name, params):
    phi = catalog_map(g, name, **params)
    d = outer_dilatation(g, phi, sample_points(g, 50, seed=7))
    assert np.all(d.value >= 1 - 1e-9)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, (2, 2), elements=st.floats(-5, 5)))
def test_outer_dilatation_at_least_one_random_matrices(m):
    if abs(np.linalg.det(m)) < 1e-6:
        return
    for g in (H1, R2):
        assert dilatation_from_differential(g, m).value >= 1 - 1e-9
