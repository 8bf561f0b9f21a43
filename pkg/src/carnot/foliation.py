"""Horizontal foliations: fibers, tubular neighborhoods and transversal measures.

The foliation by orbits of X_k is parametrized by the transversal
hyperplane ``S_k = {x_k = 0, |coords| <= M}``; the fiber through ``s`` is
``t -> s exp(t X_k)``, ``|t| <= M``, and the foliated box is ``P``.  The
transversal measure is Lebesgue measure on the coordinates of ``S_k``,
which is what the interior product of X_k with the volume form restricts
to (X_k has unit x_k-component).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import HorizontalCurve
from .groups import GroupInputError, GroupModel
from .setfunctions import Region, SetFunction, _unit_ball_cells

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class FoliationSpec:
    """Fiber direction ``k`` (0-based), box half-width ``M`` and tube radius ``r``."""

    k: int
    M: float = 1.0
    r: float = 0.1

    def validate(self, g: GroupModel) -> None:
        if not 0 <= self.k < g.n1:
            raise GroupInputError(f"field index {self.k} outside 0..{g.n1 - 1}")
        if not (self.M > 0 and self.r > 0):
            raise GroupInputError("M and r must be positive")


def _axis(g: GroupModel, k: int, t) -> np.ndarray:
    t = np.asarray(t, float)
    v = np.zeros(t.shape + (g.n1,))
    v[..., k] = t
    return g.exp_horizontal(v)


def project_to_transversal(g: GroupModel, k: int, q) -> np.ndarray:
    """The point of S_k on the X_k-orbit of ``q``: q exp(-q_k X_k)."""
    q = g.check(q)
    return g.multiply(q, _axis(g, k, -q[..., k]))


def in_box(g: GroupModel, spec: FoliationSpec, q) -> np.ndarray:
    q = g.check(q)
    s = project_to_transversal(g, spec.k, q)
    return (np.abs(q[..., spec.k]) <= spec.M) & np.all(np.abs(s) <= spec.M * (1 + 1e-12), axis=-1)


def on_transversal(g: GroupModel, spec: FoliationSpec, s) -> bool:
    s = g.check(s)
    return bool(abs(s[spec.k]) <= 1e-12 and np.all(np.abs(s) <= spec.M * (1 + 1e-12)))


def fiber(g: GroupModel, spec: FoliationSpec, s, samples: int = 65) -> HorizontalCurve:
    """The fiber ``t -> s exp(t X_k)``, ``t`` in ``[-M, M]``, with unit tangents."""
    spec.validate(g)
    if not on_transversal(g, spec, s):
        raise GroupInputError("base point is not on the transversal S_k")
    t = np.linspace(-spec.M, spec.M, samples)
    pts = g.multiply(g.check(s), _axis(g, spec.k, t))
    a = np.zeros((samples, g.n1))
    a[:, spec.k] = 1.0
    return HorizontalCurve(g, t, pts, a)


def _min_along_axis(g: GroupModel, k: int, w: np.ndarray, lo, hi, iters: int = 60):
    """min over sigma in [lo, hi] of |exp(sigma X_k) w| (unimodal in sigma)."""
    f = lambda s: g.gauge(g.multiply(_axis(g, k, s), w))  # noqa: E731
    a, b = np.array(lo, float), np.array(hi, float)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        d_new = np.where(left, c, a + _GOLDEN * (b - a))
        c_new = np.where(left, b - _GOLDEN * (b - a), d)
        f_dn = np.where(left, fc, f(d_new))
        f_cn = np.where(left, f(c_new), fd)
        c, d, fc, fd = c_new, d_new, f_cn, f_dn
    ends = np.minimum(f(np.asarray(lo, float)), f(np.asarray(hi, float)))
    return np.minimum(np.minimum(fc, fd), ends)


def _cross_axes(g: GroupModel, k: int) -> list[int]:
    return [i for i in range(g.dim) if i != k]


@dataclass
class TubeReport:
    value: float
    ratio: float
    volume: float
    clipped: bool
    cells: int


def tube_region(
    g: GroupModel, spec: FoliationSpec, s, res_t: int = 48, res_cross: int = 40
) -> tuple[Region, bool]:
    """Rasterization of E(s, r) = gamma_s B(e, r) intersected with P.

    Cells live in fiber coordinates ``(t, w) -> s exp(t X_k) w`` with
    ``w_k = 0``; the change of coordinates has unit Jacobian, so cells keep
    their coordinate volume.  Cross-section extents are ``r`` for
    first-layer axes and ``3 r^2`` for the center, which contains the tube.
    """
    spec.validate(g)
    if not on_transversal(g, spec, s):
        raise GroupInputError("base point is not on the transversal S_k")
    r, M, k = spec.r, spec.M, spec.k
    cross = _cross_axes(g, k)
    half = np.array([r if i < g.n1 else 3 * r * r for i in cross])
    ht = 2 * M / res_t
    hc = 2 * half / res_cross
    tt = -M + (np.arange(res_t) + 0.5) * ht
    axes = [-half[j] + (np.arange(res_cross) + 0.5) * hc[j] for j in range(len(cross))]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(cross))
    w = np.zeros((len(mesh), g.dim))
    w[:, cross] = mesh
    # distance to the fiber only depends on t through the clipped sigma range
    inner = _min_along_axis(g, k, w, -r, r) < r
    masks = []
    for t in tt:
        lo, hi = max(-r, t - M), min(r, t + M)
        if lo <= -r and hi >= r:
            masks.append(inner)
        else:
            masks.append(_min_along_axis(g, k, w, np.full(len(w), lo), np.full(len(w), hi)) < r)
    tube = np.stack(masks)  # (res_t, cells)
    ti, ci = np.nonzero(tube)
    pts = g.multiply(g.multiply(g.check(s), _axis(g, k, tt[ti])), w[ci])
    inside = in_box(g, spec, pts)
    clipped = bool(np.any(~inside))
    vol = ht * float(np.prod(hc))
    return Region(pts[inside], np.full(int(inside.sum()), vol)), clipped


def tube_measure(
    g: GroupModel,
    spec: FoliationSpec,
    s,
    phi: SetFunction,
    res_t: int = 48,
    res_cross: int = 40,
) -> TubeReport:
    """Phi(E(s, r)) and the quotient Phi(E(s, r)) / r^(nu - 1)."""
    region, clipped = tube_region(g, spec, s, res_t, res_cross)
    value = phi(region)
    return TubeReport(
        value, value / spec.r ** (g.nu - 1), region.volume, clipped, len(region)
    )


@dataclass
class HittingReport:
    measure: float
    ball_volume: float
    ratio: float
    constant: float
    cells: int


def _ball_points(g: GroupModel, center, r: float) -> np.ndarray:
    cells, _ = _unit_ball_cells(g, 24)
    return g.multiply(g.check(center), g.dilate(r, cells))


def foliation_measure_hitting(
    g: GroupModel,
    spec: FoliationSpec,
    center,
    radius: float,
    res: int = 48,
    max_cells: int = 400_000,
) -> HittingReport:
    """Transversal measure of the fibers of X_k meeting the gauge ball B(center, radius).

    The hitting set is sampled on a uniform grid of S_k covering its
    bounding box; cell sides are ``2 r / res`` on first-layer axes and
    ``2 r^2 / res`` on the center (coarsened uniformly if the cell count
    would exceed ``max_cells``).  The reported ratio is against
    ``|B|^((nu - 1) / nu)``; the recovered constant divides by the length
    of X_k, which is 1.
    """
    spec.validate(g)
    k, M = spec.k, spec.M
    center = g.check(center)
    ball = _ball_points(g, center, radius)
    if not np.all(in_box(g, spec, ball)):
        raise GroupInputError("ball is not inside the foliated box P")
    proj = project_to_transversal(g, k, ball)
    cross = _cross_axes(g, k)
    lo = proj[:, cross].min(axis=0)
    hi = proj[:, cross].max(axis=0)
    h = np.array([2 * radius / res if i < g.n1 else 2 * radius**2 / res for i in cross])
    lo, hi = lo - 2 * h, hi + 2 * h
    counts = np.ceil((hi - lo) / h).astype(int)
    total = int(np.prod(counts))
    if total > max_cells:
        factor = (total / max_cells) ** (1.0 / len(cross))
        h = h * factor
        counts = np.ceil((hi - lo) / h).astype(int)
    axes = [lo[j] + (np.arange(counts[j]) + 0.5) * h[j] for j in range(len(cross))]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(cross))
    s = np.zeros((len(mesh), g.dim))
    s[:, cross] = mesh
    # fiber points within the ball have |t + w_k| < r, w = center^-1 s
    w = g.multiply(g.inverse(center), s)
    tlo = np.clip(-w[:, k] - radius, -M, M)
    thi = np.clip(-w[:, k] + radius, -M, M)
    wk = w.copy()
    hit = np.zeros(len(s), bool)
    ok = thi > tlo
    if np.any(ok):
        dist = _min_along_axis(g, k, wk[ok], tlo[ok], thi[ok])
        hit[ok] = dist < radius
    measure = float(hit.sum() * np.prod(h))
    bv = g.ball_volume(radius)
    ratio = measure / bv ** ((g.nu - 1) / g.nu)
    return HittingReport(measure, bv, ratio, ratio, int(hit.sum()))


def doubling_quotient(
    g: GroupModel, spec: FoliationSpec, center, radius: float, res: int = 48
) -> float:
    big = foliation_measure_hitting(g, spec, center, 2 * radius, res)
    small = foliation_measure_hitting(g, spec, center, radius, res)
    return big.measure / small.measure
