"""Set functions on rasterized regions and their derivatives with respect to Haar measure."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .grids import Grid
from .groups import GroupModel


@dataclass(frozen=True)
class Region:
    """A measurable set represented by sample points with volume weights."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def volume(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self):
        return len(self.weights)

    def subset(self, keep) -> "Region":
        return Region(self.points[keep], self.weights[keep])


def grid_region(grid: Grid, mask=None) -> Region:
    pts = grid.flat_centers()
    w = np.full(len(pts), grid.cell_volume)
    if mask is None:
        return Region(pts, w)
    keep = np.asarray(mask, bool).ravel()
    return Region(pts[keep], w[keep])


@lru_cache(maxsize=32)
def _unit_ball_cells(model: GroupModel, res: int):
    grid = Grid.cube(-np.ones(model.dim), np.ones(model.dim), res)
    c = grid.flat_centers()
    inside = model.gauge(c) < 1.0
    return c[inside], grid.cell_volume


def ball_region(g: GroupModel, x, r: float, res: int = 24) -> Region:
    """Rasterized gauge ball B(x, r) = x * delta_r(B(e, 1)).

    The unit ball is rasterized once per resolution and transported by a
    dilation and a left translation, both of which scale Haar measure by
    the constant r^nu.
    """
    cells, vol = _unit_ball_cells(g, res)
    pts = g.multiply(g.check(x), g.dilate(r, cells))
    return Region(pts, np.full(len(cells), vol * r**g.nu))


@dataclass(frozen=True)
class SetFunction:
    """A nonnegative function of regions, with declared structural properties."""

    name: str
    evaluate: Callable[[Region], float]
    monotone: bool = True
    quasiadditive: bool = True

    def __call__(self, region: Region) -> float:
        value = float(self.evaluate(region))
        if value < 0:
            raise ValueError(f"set function {self.name} returned {value} < 0")
        return value


def volume_setfn() -> SetFunction:
    return SetFunction("volume", lambda u: u.volume)


def density_setfn(w: Callable, name: str = "density") -> SetFunction:
    """Phi(U) = integral of a nonnegative density ``w`` over U (additive)."""
    return SetFunction(name, lambda u: float(np.sum(w(u.points) * u.weights)))


def superadditive_setfn() -> SetFunction:
    """Phi(U) = |U| + |U|^2: quasiadditive and monotone but not additive."""
    return SetFunction("volume_plus_square", lambda u: u.volume + u.volume**2)


def capped_volume_setfn(cap: float) -> SetFunction:
    """Phi(U) = min(|U|, cap).  Subadditive, so not quasiadditive."""
    return SetFunction(
        f"capped_volume({cap})", lambda u: min(u.volume, cap), quasiadditive=False
    )


def zero_setfn() -> SetFunction:
    return SetFunction("zero", lambda u: 0.0)


def quasiadditivity_violation(
    phi: SetFunction, region: Region, parts: int = 4, trials: int = 16, seed: int = 0
) -> float:
    """Largest ``sum_i Phi(U_i) - Phi(U)`` over random disjoint splits of ``region``."""
    rng = np.random.default_rng(seed)
    whole = phi(region)
    worst = -np.inf
    for _ in range(trials):
        labels = rng.integers(0, parts, len(region))
        if rng.uniform() < 0.5:
            # contiguous split along the first coordinate
            order = np.argsort(region.points[:, 0], kind="stable")
            labels = np.empty(len(region), int)
            labels[order] = np.arange(len(region)) * parts // len(region)
        total = sum(phi(region.subset(labels == k)) for k in range(parts))
        worst = max(worst, total - whole)
    return float(worst)


@dataclass
class DerivativeEstimate:
    value: float
    radii: np.ndarray
    quotients: np.ndarray

    def cauchy_spread(self, last: int = 3) -> float:
        """Relative spread of the last few quotients."""
        tail = self.quotients[-last:]
        return float((tail.max() - tail.min()) / max(abs(tail[-1]), 1e-300))


def default_radii(r0: float = 0.2, levels: int = 6) -> np.ndarray:
    return r0 * 0.5 ** np.arange(levels)


def setfn_derivative(
    phi: SetFunction, g: GroupModel, x, radii=None, res: int = 24
) -> DerivativeEstimate:
    """Quotients Phi(B(x, d)) / |B(x, d)| along decreasing radii.

    Both numerator and denominator use the same rasterized ball, so the
    volume function has quotient exactly 1.
    """
    radii = default_radii() if radii is None else np.asarray(radii, float)
    if np.any(radii <= 0) or np.any(np.diff(radii) >= 0):
        raise ValueError("radii must be positive and strictly decreasing")
    q = []
    for d in radii:
        ball = ball_region(g, x, float(d), res)
        q.append(phi(ball) / ball.volume)
    q = np.array(q)
    return DerivativeEstimate(float(q[-1]), radii, q)


@dataclass
class LowerIntegralReport:
    integral: float
    phi_of_u: float
    tolerance: float
    cells: int

    @property
    def passed(self) -> bool:
        return self.integral <= self.phi_of_u * (1 + self.tolerance)

    @property
    def strict(self) -> bool:
        return self.integral < self.phi_of_u * (1 - self.tolerance)


def setfn_lower_integral_check(
    phi: SetFunction,
    g: GroupModel,
    grid: Grid,
    mask=None,
    radius: float | None = None,
    ball_res: int = 16,
    tol: float = 0.03,
) -> LowerIntegralReport:
    """Compare sum over cells of Phi'(center) * vol with Phi(U).

    ``Phi'`` is the ball quotient at ``radius`` (default: half the smallest
    cell side).  Refused for set functions not declared quasiadditive.
    """
    if not phi.quasiadditive:
        raise ValueError(
            f"set function {phi.name} is not declared quasiadditive; "
            "the lower-integral inequality does not apply"
        )
    region = grid_region(grid, mask)
    if radius is None:
        radius = 0.5 * float(np.min(grid.spacing))
    deriv = np.empty(len(region))
    for i, x in enumerate(region.points):
        ball = ball_region(g, x, radius, ball_res)
        deriv[i] = phi(ball) / ball.volume
    integral = float(np.sum(deriv * region.weights))
    return LowerIntegralReport(integral, phi(region), tol, len(region))
