import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from carnot.groups import GroupInputError, abelian, heisenberg, model_from_name

from oracles import H1_UNIT_BALL, h1_inverse, h1_multiply

H1 = heisenberg(1)
R2 = abelian(2)

coord = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
h1_point = arrays(np.float64, 3, elements=coord)
scale = st.floats(0.05, 20.0)


@pytest.mark.parametrize(
    "g, nu, n1, dim",
    [(abelian(2), 2, 2, 2), (abelian(3), 3, 3, 3), (heisenberg(1), 4, 2, 3), (heisenberg(2), 6, 4, 5)],
)
def test_homogeneous_dimension(g, nu, n1, dim):
    assert (g.nu, g.n1, g.dim) == (nu, n1, dim)
    assert g.nu == int(np.sum(g.weights))


def test_multiply_examples():
    assert np.array_equal(H1.multiply([1, 0, 0], [0, 1, 0]), [1, 1, -2])
    assert np.array_equal(R2.multiply([1, 2], [3, 4]), [4, 6])
    p = np.array([0.3, -1.2, 2.0])
    assert np.array_equal(H1.multiply(p, H1.identity()), p)


def test_inverse_examples():
    assert np.array_equal(H1.inverse([1, 1, -2]), [-1, -1, 2])
    assert np.allclose(H1.multiply(H1.inverse([1, 1, -2]), [1, 1, -2]), 0)
    assert np.array_equal(R2.inverse([1, 2]), [-1, -2])
    assert np.array_equal(H1.inverse(H1.identity()), H1.identity())


def test_dilation_examples():
    assert np.array_equal(H1.dilate(2.0, [1, 1, 1]), [2, 2, 4])
    p = np.array([0.4, 0.1, -0.7])
    assert np.array_equal(H1.dilate(1.0, p), p)
    with pytest.raises(GroupInputError):
        H1.dilate(0.0, p)
    with pytest.raises(GroupInputError):
        H1.dilate(-1.0, p)


def test_gauge_examples():
    assert H1.gauge(H1.identity()) == 0
    assert H1.gauge([1, 0, 0]) == pytest.approx(1.0, abs=1e-15)
    assert H1.gauge([0, 0, 1]) == pytest.approx(1.0, abs=1e-15)
    assert R2.quasimetric([1, 2], [4, 6]) == pytest.approx(5.0)
    assert H1.quasimetric([0.2, 0.3, 0.4], [0.2, 0.3, 0.4]) == 0


def test_dimension_mismatch_is_input_error():
    with pytest.raises(GroupInputError):
        H1.multiply([1, 0], [0, 1, 0])
    with pytest.raises(GroupInputError):
        R2.gauge(3.0)


@pytest.mark.parametrize("name, kind, n", [("R2", "abelian", 2), ("r3", "abelian", 3), ("H1", "heisenberg", 1)])
def test_model_from_name(name, kind, n):
    g = model_from_name(name)
    assert (g.kind, g.n) == (kind, n)
    assert model_from_name(g.name) == g


@pytest.mark.parametrize("bad", ["", "X2", "H", "Rn"])
def test_model_from_name_rejects(bad):
    with pytest.raises(GroupInputError):
        model_from_name(bad)


@settings(max_examples=200, deadline=None)
@given(h1_point, h1_point)
def test_law_matches_matrix_oracle(p, q):
    assert np.allclose(H1.multiply(p, q), h1_multiply(p, q), atol=1e-11)
    assert np.allclose(H1.inverse(p), h1_inverse(p), atol=1e-11)


@settings(max_examples=200, deadline=None)
@given(h1_point, h1_point, h1_point)
def test_associativity(p, q, r):
    lhs = H1.multiply(H1.multiply(p, q), r)
    rhs = H1.multiply(p, H1.multiply(q, r))
    assert np.allclose(lhs, rhs, atol=1e-12 * max(1.0, np.abs(lhs).max()))


@settings(max_examples=100, deadline=None)
@given(h1_point, h1_point, scale)
def test_dilation_is_homomorphism(p, q, t):
    lhs = H1.dilate(t, H1.multiply(p, q))
    rhs = H1.multiply(H1.dilate(t, p), H1.dilate(t, q))
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(lhs).max()))


@settings(max_examples=100, deadline=None)
@given(h1_point, scale)
def test_gauge_axioms(p, t):
    n = H1.gauge(p)
    assert H1.gauge(H1.dilate(t, p)) == pytest.approx(t * n, rel=1e-12, abs=1e-300)
    assert H1.gauge(H1.inverse(p)) == pytest.approx(n, rel=1e-15)
    assert (n == 0) == bool(np.all(p == 0))


@settings(max_examples=100, deadline=None)
@given(h1_point, h1_point, h1_point)
def test_quasimetric_left_invariant(g, p, q):
    a = H1.quasimetric(H1.multiply(g, p), H1.multiply(g, q))
    assert a == pytest.approx(H1.quasimetric(p, q), rel=1e-9, abs=1e-9)


def test_triangle_constant():
    assert R2.estimate_triangle_constant(20_000, seed=3) <= 1 + 1e-12
    tau = H1.estimate_triangle_constant(100_000, seed=3)
    assert np.isfinite(tau) and tau >= 1 - 1e-12
    # fixed-seed prefix property: more samples never lowers the estimate
    a = H1.estimate_triangle_constant(5_000, seed=9)
    b = H1.estimate_triangle_constant(50_000, seed=9)
    assert b >= a
    assert H1.estimate_triangle_constant(1000, seed=9) == H1.estimate_triangle_constant(1000, seed=9)


def test_collinear_horizontal_ratio_is_one():
    p, q = np.array([0.7, 0, 0]), np.array([1.9, 0, 0])
    assert H1.gauge(H1.multiply(p, q)) / (H1.gauge(p) + H1.gauge(q)) == pytest.approx(1.0, abs=1e-15)


def test_ball_volumes():
    assert R2.ball_volume(1.5) == pytest.approx(np.pi * 2.25)
    assert H1.ball_volume(2.0) / H1.ball_volume(1.0) == pytest.approx(16.0, rel=1e-14)
    ub = H1.unit_ball
    assert ub.samples >= 1_000_000
    assert abs(ub.value - H1_UNIT_BALL) <= 4 * ub.stderr
    with pytest.raises(GroupInputError):
        H1.ball_volume(0.0)
