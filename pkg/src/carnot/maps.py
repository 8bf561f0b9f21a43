"""Catalog of explicit contact homeomorphisms with closed-form inverses and differentials.

Differentials follow the Jacobian layout of :mod:`carnot.horizontal`:
``D[..., j, i] = X_i phi_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .groups import GroupInputError, GroupModel

CATALOG = ("translation", "dilation", "rotation", "diag-stretch", "radial-power")


@dataclass
class ContactMap:
    """A homeomorphism given by forward, inverse and horizontal-differential evaluators."""

    name: str
    model: GroupModel
    params: dict
    forward_fn: Callable
    inverse_fn: Callable
    differential_fn: Callable | None = None
    domain: tuple | None = None
    extra: dict = field(default_factory=dict)

    def forward(self, p) -> np.ndarray:
        return self.forward_fn(self.model.check(p))

    def inverse(self, q) -> np.ndarray:
        return self.inverse_fn(self.model.check(q))

    @property
    def differential(self):
        """Analytic differential evaluator, or None (finite differences are used)."""
        if self.differential_fn is None:
            return None
        return lambda p: self.differential_fn(self.model.check(p))

    def in_domain(self, p) -> np.ndarray:
        p = np.asarray(p, float)
        if self.domain is None:
            return np.ones(p.shape[:-1], bool)
        lo, hi = (np.asarray(b, float) for b in self.domain)
        return np.all((p >= lo) & (p <= hi), axis=-1)

    def __call__(self, p):
        return self.forward(p)

    def describe(self) -> dict:
        return {"name": self.name, "model": self.model.name, "params": self.params}


def _eye_stack(g: GroupModel, p, scale=1.0):
    shape = np.shape(p)[:-1] + (g.n1, g.n1)
    return np.broadcast_to(np.eye(g.n1) * scale, shape).copy()


def identity_map(g: GroupModel) -> ContactMap:
    return ContactMap("identity", g, {}, lambda p: p.copy(), lambda q: q.copy(), lambda p: _eye_stack(g, p))


def translation(g: GroupModel, by) -> ContactMap:
    """Left translation ``p -> by * p``; its horizontal differential is the identity."""
    a = g.check(by)
    a_inv = g.inverse(a)
    return ContactMap(
        "translation",
        g,
        {"by": a.tolist()},
        lambda p: g.multiply(a, p),
        lambda q: g.multiply(a_inv, q),
        lambda p: _eye_stack(g, p),
    )


def dilation(g: GroupModel, t: float) -> ContactMap:
    if not t > 0:
        raise GroupInputError("dilation factor must be positive")
    return ContactMap(
        "dilation",
        g,
        {"t": t},
        lambda p: g.dilate(t, p),
        lambda q: g.dilate(1.0 / t, q),
        lambda p: _eye_stack(g, p, t),
    )


def _rotation_matrix(g: GroupModel, theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    m = np.eye(g.n1)
    if g.is_abelian:
        m[:2, :2] = [[c, -s], [s, c]]
    else:
        n = g.n
        for i in range(n):
            # (x_i, y_i) -> (c x_i - s y_i, s x_i + c y_i) preserves the symplectic form
            m[i, i], m[i, n + i] = c, -s
            m[n + i, i], m[n + i, n + i] = s, c
    return m


def rotation(g: GroupModel, theta: float) -> ContactMap:
    """Rotation of the first layer (of each symplectic pair on H^n); the center is fixed."""
    m = _rotation_matrix(g, theta)

    def apply(mat):
        def f(p):
            out = p.copy()
            out[..., : g.n1] = p[..., : g.n1] @ mat.T
            return out

        return f

    return ContactMap(
        "rotation",
        g,
        {"theta": theta},
        apply(m),
        apply(m.T),
        lambda p: np.broadcast_to(m, np.shape(p)[:-1] + m.shape).copy(),
    )


def diag_stretch(g: GroupModel, a: float, b: float) -> ContactMap:
    """``(x, y, z) -> (a x, b y, a b z)`` on H^1; ``(x, y, ...) -> (a x, b y, ...)`` on R^n."""
    if not (a > 0 and b > 0):
        raise GroupInputError("stretch factors must be positive")
    if not g.is_abelian and g.n != 1:
        raise GroupInputError("diag-stretch is defined on H^1 and on R^n")
    s = np.ones(g.dim)
    s[0], s[1] = a, b
    if not g.is_abelian:
        s[2] = a * b
    d = np.eye(g.n1)
    d[0, 0], d[1, 1] = a, b
    return ContactMap(
        "diag-stretch",
        g,
        {"a": a, "b": b},
        lambda p: p * s,
        lambda q: q / s,
        lambda p: np.broadcast_to(d, np.shape(p)[:-1] + d.shape).copy(),
    )


def _radial_differential(p, alpha):
    r = np.linalg.norm(p, axis=-1)
    n = p.shape[-1]
    safe = np.where(r > 0, r, 1.0)
    u = p / safe[..., None]
    outer = u[..., :, None] * u[..., None, :]
    scale = np.where(r > 0, safe ** (alpha - 1), 1.0 if alpha == 1 else np.inf)
    return scale[..., None, None] * (np.eye(n) + (alpha - 1) * outer)


def radial_power(g: GroupModel, alpha: float) -> ContactMap:
    """``x -> x |x|^(alpha - 1)`` on R^n, with inverse exponent ``1 / alpha``."""
    if not g.is_abelian:
        raise GroupInputError("radial-power is defined on the abelian model only")
    if not alpha > 0:
        raise GroupInputError("radial-power exponent must be positive")

    def power(beta):
        def f(p):
            r = np.linalg.norm(p, axis=-1, keepdims=True)
            return np.where(r > 0, p * np.where(r > 0, r, 1.0) ** (beta - 1), 0.0)

        return f

    return ContactMap(
        "radial-power",
        g,
        {"alpha": alpha},
        power(alpha),
        power(1.0 / alpha),
        lambda p: _radial_differential(p, alpha),
    )


def catalog_map(g: GroupModel, name: str, **params) -> ContactMap:
    """Build a catalog map by name; unknown names or bad parameters raise an input error."""
    try:
        if name == "identity":
            return identity_map(g)
        if name == "translation":
            return translation(g, params["by"])
        if name == "dilation":
            return dilation(g, float(params["t"]))
        if name == "rotation":
            return rotation(g, float(params["theta"]))
        if name == "diag-stretch":
            return diag_stretch(g, float(params["a"]), float(params["b"]))
        if name == "radial-power":
            return radial_power(g, float(params["alpha"]))
    except KeyError as exc:
        raise GroupInputError(f"map {name} needs parameter {exc.args[0]}") from exc
    raise GroupInputError(f"unknown catalog map {name!r}; choose from {', '.join(CATALOG)}")


def compose(phi: ContactMap, psi: ContactMap) -> ContactMap:
    """``phi o psi`` with the chain rule ``D(phi o psi)(p) = D phi(psi(p)) D psi(p)``."""
    if phi.model != psi.model:
        raise GroupInputError("cannot compose maps on different models")
    diff = None
    if phi.differential_fn is not None and psi.differential_fn is not None:
        diff = lambda p: phi.differential_fn(psi.forward(p)) @ psi.differential_fn(p)  # noqa: E731
    return ContactMap(
        f"{phi.name}*{psi.name}",
        phi.model,
        {"outer": phi.describe(), "inner": psi.describe()},
        lambda p: phi.forward(psi.forward(p)),
        lambda q: psi.inverse(phi.inverse(q)),
        diff,
    )


def inverse_map(phi: ContactMap) -> ContactMap:
    """``phi^-1`` with ``D(phi^-1)(y) = D phi(phi^-1(y))^-1``."""
    diff = None
    if phi.differential_fn is not None:
        diff = lambda q: np.linalg.inv(phi.differential_fn(phi.inverse(q)))  # noqa: E731
    return ContactMap(
        f"inverse({phi.name})",
        phi.model,
        {"of": phi.describe()},
        phi.inverse_fn,
        phi.forward_fn,
        diff,
    )
