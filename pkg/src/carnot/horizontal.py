"""Left-invariant horizontal frames and horizontal derivatives of functions and maps.

Matrices of horizontal differentials use the Jacobian layout: for a map
``phi`` the array ``D[..., j, i] = X_i phi_j``, i.e. column ``i`` is the
first-layer image of ``X_i``.  With this layout the chain rule reads
``D(phi o psi)(p) = D phi(psi(p)) @ D psi(p)``.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .groups import GroupInputError, GroupModel

DEFAULT_STEP = 1e-5


class DomainError(ValueError):
    """A field or map could not be evaluated where the stencil needed it."""


class UnsupportedModelError(NotImplementedError):
    pass


class Distortion(NamedTuple):
    """Outer dilatation values; ``degenerate`` marks J = 0 with D_H != 0 (value inf)."""

    value: np.ndarray
    degenerate: np.ndarray


def frame_at(g: GroupModel, p) -> np.ndarray:
    """Coordinate components of X_1..X_{n1} at ``p``, shape ``(..., n1, dim)``."""
    p = g.check(p)
    frame = np.broadcast_to(np.eye(g.n1, g.dim), p.shape[:-1] + (g.n1, g.dim)).copy()
    if not g.is_abelian:
        n = g.n
        frame[..., :n, -1] = 2.0 * p[..., n : 2 * n]
        frame[..., n : 2 * n, -1] = -2.0 * p[..., :n]
    return frame


def flow(g: GroupModel, p, i: int, t) -> np.ndarray:
    """Flow of X_i for time ``t``: the right translation p * exp(t X_i)."""
    t = np.asarray(t, dtype=float)
    e = np.zeros(np.shape(t) + (g.n1,))
    e[..., i] = t
    return g.multiply(p, g.exp_horizontal(e))


def flow_commutator(g: GroupModel, p, i: int, j: int, t: float) -> np.ndarray:
    """Second-order flow difference estimating the bracket [X_i, X_j] at ``p``.

    Follows X_i, X_j, -X_i, -X_j for time ``t`` each and returns the
    coordinate displacement divided by ``t**2``.
    """
    q = flow(g, p, i, t)
    q = flow(g, q, j, t)
    q = flow(g, q, i, -t)
    q = flow(g, q, j, -t)
    return (q - g.check(p)) / t**2


def _evaluate(f, pts):
    try:
        out = f(pts)
    except Exception as exc:  # evaluator failures are reported uniformly
        raise DomainError(f"evaluator failed at stencil points: {exc}") from exc
    out = np.asarray(out, dtype=float)
    if not np.all(np.isfinite(out)):
        raise DomainError("evaluator returned non-finite values at stencil points")
    return out


def horizontal_gradient(
    g: GroupModel, f: Callable, p, h: float = DEFAULT_STEP
) -> np.ndarray:
    """Centered differences of ``f`` along the flows of X_1..X_{n1}.

    ``f`` maps an array of points ``(..., dim)`` to values ``(...)``.
    Returns shape ``(..., n1)``.
    """
    if not h > 0:
        raise GroupInputError("step must be positive")
    p = g.check(p)
    cols = []
    for i in range(g.n1):
        fp = _evaluate(f, flow(g, p, i, h))
        fm = _evaluate(f, flow(g, p, i, -h))
        cols.append((fp - fm) / (2 * h))
    return np.stack(cols, axis=-1)


def _forward(phi):
    return phi.forward if hasattr(phi, "forward") else phi


def fd_differential(g: GroupModel, phi, p, h: float = DEFAULT_STEP) -> np.ndarray:
    """Group-intrinsic centered-difference horizontal differential.

    Column ``i`` is the derivative at t = 0 of the first layer of
    ``phi(p)^-1 phi(p exp(t X_i))``.
    """
    if not h > 0:
        raise GroupInputError("step must be positive")
    fwd = _forward(phi)
    p = g.check(p)
    base_inv = g.inverse(_evaluate(fwd, p))
    cols = []
    for i in range(g.n1):
        up = g.first_layer(g.multiply(base_inv, _evaluate(fwd, flow(g, p, i, h))))
        dn = g.first_layer(g.multiply(base_inv, _evaluate(fwd, flow(g, p, i, -h))))
        cols.append((up - dn) / (2 * h))
    return np.stack(cols, axis=-1)


def horizontal_differential(
    g: GroupModel, phi, p, h: float = DEFAULT_STEP
) -> np.ndarray:
    """Horizontal differential of ``phi`` at ``p``, shape ``(..., n1, n1)``.

    An analytic ``phi.differential`` takes precedence over finite differences.
    """
    analytic = getattr(phi, "differential", None)
    if analytic is not None:
        return np.asarray(analytic(g.check(p)), dtype=float)
    return fd_differential(g, phi, p, h)


def operator_norm(m, rtol: float = 1e-12, max_iter: int = 10_000) -> np.ndarray:
    """Largest singular value of each matrix in a stack."""
    m = np.asarray(m, dtype=float)
    # normalize by the largest entry so tiny or huge matrices neither underflow nor overflow
    amax = np.max(np.abs(m), axis=(-2, -1))
    scale = np.where(amax > 0, amax, 1.0)
    return scale * _unit_operator_norm(m / scale[..., None, None], rtol, max_iter)


def _unit_operator_norm(m, rtol, max_iter):
    if m.shape[-1] == 2 and m.shape[-2] == 2:
        s = np.sum(m * m, axis=(-2, -1))
        det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
        disc = np.sqrt(np.maximum(s * s - 4 * det * det, 0.0))
        return np.sqrt(np.maximum((s + disc) / 2, 0.0))
    gram = np.swapaxes(m, -1, -2) @ m
    # fixed generic start vector, not orthogonal to any coordinate subspace
    start = np.random.default_rng(7).uniform(0.5, 1.5, m.shape[-1])
    v = np.broadcast_to(start / np.linalg.norm(start), m.shape[:-2] + (m.shape[-1],))
    lam = np.zeros(m.shape[:-2])
    for _ in range(max_iter):
        w = np.einsum("...ij,...j->...i", gram, v)
        nw = np.linalg.norm(w, axis=-1)
        new = nw
        safe = np.where(nw > 0, nw, 1.0)
        v = np.where(nw[..., None] > 0, w / safe[..., None], v)
        converged = np.abs(new - lam) <= rtol * np.maximum(new, 1e-300)
        lam = new
        if np.all(converged):
            break
    return np.sqrt(lam)


def center_factor(g: GroupModel, m) -> np.ndarray:
    """Action on the center of the Lie algebra map induced by ``m``.

    On H^n the bracket forces ``D Z = lambda Z`` with
    ``lambda = omega(m e_xi, m e_yi)``; the mean over the ``n`` symplectic
    pairs is returned.  The abelian factor is 1.
    """
    m = np.asarray(m, dtype=float)
    if g.is_abelian:
        return np.ones(m.shape[:-2])
    n = g.n
    lam = 0.0
    for i in range(n):
        lam = lam + g.symplectic_form(m[..., :, i], m[..., :, n + i])
    return lam / n


def jacobian_from_differential(g: GroupModel, m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if g.kind not in ("abelian", "heisenberg"):
        raise UnsupportedModelError(f"no induced-map rule for {g!r}")
    return np.linalg.det(m) * center_factor(g, m)


def formal_jacobian(g: GroupModel, phi, p, h: float = DEFAULT_STEP) -> np.ndarray:
    """Determinant of the formal differential; on H^1 this is (det D_H)^2."""
    return jacobian_from_differential(g, horizontal_differential(g, phi, p, h))


def dilatation_from_differential(g: GroupModel, m) -> Distortion:
    """Outer dilatation |D_H|^nu / |J| with the zero-differential case set to 0."""
    m = np.asarray(m, dtype=float)
    norm = operator_norm(m)
    jac = np.abs(jacobian_from_differential(g, m))
    zero = norm == 0
    degenerate = (jac == 0) & ~zero
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(jac > 0, norm**g.nu / np.where(jac > 0, jac, 1.0), np.inf)
    k = np.where(zero, 0.0, k)
    return Distortion(k, degenerate)


def outer_dilatation(g: GroupModel, phi, p, h: float = DEFAULT_STEP) -> Distortion:
    return dilatation_from_differential(g, horizontal_differential(g, phi, p, h))
