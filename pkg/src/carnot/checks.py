"""Cross-checks between the modulus and capacity solvers and their scaling laws."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .capacity import Condenser, p_capacity
from .curves import CurveFamily, HorizontalCurve
from .grids import Grid
from .groups import GroupInputError, GroupModel
from .horizontal import horizontal_gradient
from .modulus import SolveOptions, modulus


class DegeneratePotentialError(ValueError):
    """The potential is flat where flow lines should start."""


@dataclass
class EqualityReport:
    modulus: float
    capacity: float
    gap: float
    curves: int
    dropped: int
    bias: str
    converged: bool

    def to_record(self) -> dict:
        return dict(self.__dict__)


def _interpolator(grid: Grid, values):
    return RegularGridInterpolator(
        grid.axes(), np.asarray(values, float), bounds_error=False, fill_value=None
    )


def _boundary_faces(mask: np.ndarray):
    """(cell index, axis, side) for every face between a masked and an unmasked cell."""
    idx = np.stack(np.nonzero(mask), -1)
    faces = []
    for ax in range(mask.ndim):
        for side in (1, -1):
            nb = idx.copy()
            nb[:, ax] += side
            ok = (nb[:, ax] >= 0) & (nb[:, ax] < mask.shape[ax])
            sel = np.zeros(len(idx), bool)
            sel[ok] = ~mask[tuple(nb[ok].T)]
            for row in idx[sel]:
                faces.append((row, ax, side))
    # lexicographic order makes the start list independent of the loop nesting
    faces.sort(key=lambda f: (tuple(f[0]), f[1], f[2]))
    return faces


def trace_flow_lines(
    cond: Condenser,
    potential,
    jitter: int = 3,
    seed: int = 0,
    step: float | None = None,
    max_steps: int | None = None,
    density: float = 3.0,
) -> tuple[CurveFamily, int]:
    """Unit-speed descent lines of the interpolated potential from F1 toward F0.

    Lines start at the midpoints of the faces separating F1 cells from the
    rest of the grid (in lexicographic order), plus uniformly jittered
    copies displaced within the face.  The number of copies is at least
    ``jitter`` and large enough to give about ``density`` lines per face of
    F0 facing the gap, since the lines spread out on their way to F0.
    Each line steps by the midpoint rule
    ``p <- p exp(ds a(p exp(ds a(p) / 2)))`` with ``a = -grad_H v / |grad_H v|``
    and stops on entering an F0 cell.  Lines that leave the box, hit a
    critical point, or run out of steps are dropped and counted.
    """
    g = cond.model
    grid = cond.grid
    interp = _interpolator(grid, potential)
    h = float(np.min(grid.spacing))
    ds = 0.5 * h if step is None else step
    span = float(np.linalg.norm(np.array(grid.upper) - np.array(grid.lower)))
    max_steps = max_steps or int(6 * span / ds)
    rng = np.random.default_rng(seed)
    faces = _boundary_faces(cond.f1)
    if not faces:
        raise DegeneratePotentialError("F1 has no boundary faces inside the grid")
    lower = np.array(grid.lower)
    sp = grid.spacing
    starts = np.array([lower + (row + 0.5) * sp for row, _, _ in faces])
    normal = np.zeros((len(faces), grid.ndim))
    for j, (_, ax, side) in enumerate(faces):
        normal[j, ax] = side
    starts = starts + 0.5 * normal * sp
    outer = len(_boundary_faces(cond.f0 & cond.omega))
    copies = max(jitter, int(np.ceil(density * outer / len(faces))) - 1)
    batch = [starts]
    for _ in range(copies):
        shift = rng.uniform(-0.5, 0.5, starts.shape) * sp * (1 - np.abs(normal))
        batch.append(starts + shift)
    p = np.concatenate(batch)
    f0 = cond.f0.ravel()

    def direction(q):
        grad = horizontal_gradient(g, interp, q, 0.25 * h)
        norm = np.linalg.norm(grad, axis=-1)
        return -grad / np.where(norm > 0, norm, 1.0)[:, None], norm

    a0, n0 = direction(p)
    if not np.any(n0 > 1e-12):
        raise DegeneratePotentialError("potential is flat at every flow-line start")
    alive = n0 > 1e-12
    stop = np.full(len(p), -1)
    pts = [p.copy()]
    tans = [a0]
    for step_no in range(1, max_steps + 1):
        active = np.nonzero(alive & (stop < 0))[0]
        q = p[active]
        a1, _ = direction(q)
        mid = g.multiply(q, g.exp_horizontal(0.5 * ds * a1))
        a2, nrm = direction(mid)
        p = p.copy()
        p[active] = g.multiply(q, g.exp_horizontal(ds * a2))
        idx = grid.locate(p[active])
        lost = (idx < 0) | (nrm <= 1e-12)
        alive[active[lost]] = False
        reached = ~lost & f0[np.maximum(idx, 0)]
        stop[active[reached]] = step_no
        a = np.zeros_like(a0)
        a[active] = a2
        pts.append(p)
        tans.append(a)
        if not np.any(alive & (stop < 0)):
            break
    pts = np.stack(pts, 1)
    tans = np.stack(tans, 1)
    curves = []
    for j in np.nonzero(alive & (stop > 0))[0]:
        k = stop[j] + 1
        curves.append(HorizontalCurve(g, ds * np.arange(k), pts[j, :k], tans[j, :k]))
    dropped = len(p) - len(curves)
    if not curves:
        raise DegeneratePotentialError("no flow line reached F0")
    fam = CurveFamily(g, curves, {"kind": "flow-lines", "copies": copies, "seed": seed})
    return fam, dropped


def equality_check(
    cond: Condenser,
    opts: SolveOptions | None = None,
    jitter: int = 3,
    seed: int = 0,
) -> EqualityReport:
    """Compare cap_nu of ``cond`` with the modulus of its descent flow lines.

    The traced family is a subfamily of all curves joining F0 and F1 in
    Omega, so its modulus is biased low against the exact modulus of the
    full connecting family (which equals cap_nu).
    """
    nu = cond.model.nu
    cap = p_capacity(cond, nu, opts)
    if not cap.report.converged:
        raise GroupInputError("capacity solve did not converge; equality check refused")
    fam, dropped = trace_flow_lines(cond, cap.potential, jitter=jitter, seed=seed)
    rep, _ = modulus(fam, cond.grid, nu, opts)
    gap = abs(rep.value - cap.value) / cap.value
    return EqualityReport(
        modulus=rep.value,
        capacity=cap.value,
        gap=gap,
        curves=len(fam),
        dropped=dropped,
        bias="modulus of a subfamily: low against the full connecting family",
        converged=bool(rep.converged and cap.report.converged),
    )


def dilate_condenser(cond: Condenser, t: float) -> Condenser:
    """The rasterized condenser transported by delta_t.

    The grid box is dilated layer by layer and the masks are kept: the
    center of a cell maps to the center of the dilated cell, so the new
    masks are exactly the rasterizations of the dilated plates.
    """
    if not t > 0:
        raise GroupInputError("dilation factor must be positive")
    w = np.array(cond.model.weights, float)
    grid = cond.grid.scaled(t**w)
    labels = dict(cond.labels, dilation=t)
    return Condenser(cond.model, grid, cond.f0, cond.f1, cond.omega, labels)


@dataclass
class ScalingReport:
    p: float
    base: float
    exponent: float
    rows: list = field(default_factory=list)
    tol: float = 0.03

    @property
    def passed(self) -> bool:
        return all(r["rel_error"] <= self.tol for r in self.rows)

    def to_record(self) -> dict:
        return {
            "p": self.p,
            "base": self.base,
            "exponent": self.exponent,
            "rows": self.rows,
            "tol": self.tol,
            "passed": self.passed,
        }


def dilation_scaling_check(
    cond: Condenser,
    p: float,
    ts: Sequence[float] = (0.5, 2.0),
    opts: SolveOptions | None = None,
    tol: float = 0.03,
) -> ScalingReport:
    """Check ``cap_p(delta_t cond) = t^(nu - p) cap_p(cond)`` for each ``t``."""
    base = p_capacity(cond, p, opts).value
    expo = cond.model.nu - p
    rep = ScalingReport(p, base, expo, tol=tol)
    for t in ts:
        val = p_capacity(dilate_condenser(cond, t), p, opts).value
        expected = t**expo * base
        rep.rows.append(
            {"t": t, "value": val, "expected": expected, "rel_error": abs(val - expected) / expected}
        )
    return rep


@dataclass
class Lemma2Pair:
    """A continuum ``E`` (dense samples) and an open set ``G`` given by a predicate."""

    model: GroupModel
    e_points: np.ndarray
    g_predicate: Callable
    lower: tuple
    upper: tuple
    label: str = ""

    def diameter(self) -> float:
        g = self.model
        e = self.e_points
        return float(np.max(g.quasimetric(e[:, None, :], e[None, :, :])))

    def at_resolution(self, res: int):
        grid = Grid.cube(self.lower, self.upper, res)
        gmask = grid.mask(self.g_predicate)
        f1 = grid.mask_from_points(self.e_points)
        return grid, gmask, f1


def dilate_pair(pair: Lemma2Pair, t: float) -> Lemma2Pair:
    g = pair.model
    w = np.array(g.weights, float)
    inv = 1.0 / t
    return Lemma2Pair(
        g,
        g.dilate(t, pair.e_points),
        lambda x: pair.g_predicate(g.dilate(inv, x)),
        tuple(np.array(pair.lower) * t**w),
        tuple(np.array(pair.upper) * t**w),
        f"{pair.label} dilated by {t}",
    )


@dataclass
class Lemma2Report:
    p: float
    c0: float
    rows: list
    minimum: float | None
    refined_minimum: float | None
    stability: float | None
    skipped: list

    @property
    def passed(self) -> bool:
        return (
            self.minimum is not None
            and self.minimum > 0
            and self.refined_minimum is not None
            and self.refined_minimum > 0
            and self.stability is not None
            and self.stability <= 0.2
        )

    def to_record(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def _distance_to_set(g: GroupModel, x, e_points, chunk: int = 2048) -> np.ndarray:
    out = np.empty(len(x))
    for i in range(0, len(x), chunk):
        xs = x[i : i + chunk]
        out[i : i + chunk] = np.min(g.quasimetric(xs[:, None, :], e_points[None, :, :]), axis=1)
    return out


def lemma2_ratio(pair: Lemma2Pair, p: float, res: int, c0: float = 0.5, opts=None) -> dict:
    """``cap_p(E, G)^(nu - 1) |G|^(p - nu + 1) / diam(E)^p`` on one grid.

    Raises :class:`GroupInputError` when ``G`` is not inside the
    ``c0 diam(E)`` neighborhood of ``E``.
    """
    g = pair.model
    nu = g.nu
    if not nu - 1 < p:
        raise GroupInputError("the capacity lower bound needs p > nu - 1")
    grid, gmask, f1 = pair.at_resolution(res)
    diam = pair.diameter()
    centers = grid.flat_centers()[gmask.ravel()]
    reach = float(np.max(_distance_to_set(g, centers, pair.e_points))) if len(centers) else 0.0
    if reach > c0 * diam * (1 + 1e-9):
        raise GroupInputError(
            f"G reaches {reach:.4g} from E, beyond c0 diam(E) = {c0 * diam:.4g}"
        )
    f1 = f1 & gmask
    cond = Condenser(g, grid, ~gmask, f1, labels={"pair": pair.label})
    cap = p_capacity(cond, p, opts)
    vol_g = float(gmask.sum() * grid.cell_volume)
    ratio = cap.value ** (nu - 1) * vol_g ** (p - (nu - 1)) / diam**p
    return {
        "label": pair.label,
        "res": res,
        "capacity": cap.value,
        "volume_G": vol_g,
        "diam_E": diam,
        "ratio": ratio,
        "converged": cap.report.converged,
    }


def lemma2_bound_check(
    pairs: Sequence[Lemma2Pair],
    p: float,
    res: int = 48,
    refine: float = 1.5,
    c0: float = 0.5,
    opts: SolveOptions | None = None,
) -> Lemma2Report:
    """Empirical constant of the capacity lower bound over a suite of pairs.

    Pairs violating the neighborhood hypothesis are skipped and listed.
    The suite minimum is compared with the minimum after refining the grid
    by ``refine``.
    """
    rows, skipped = [], []
    fine_res = int(round(res * refine))
    for pair in pairs:
        try:
            coarse = lemma2_ratio(pair, p, res, c0, opts)
            fine = lemma2_ratio(pair, p, fine_res, c0, opts)
        except GroupInputError as exc:
            skipped.append({"label": pair.label, "reason": str(exc)})
            continue
        rows.append({"coarse": coarse, "fine": fine})
    if not rows:
        return Lemma2Report(p, c0, rows, None, None, None, skipped)
    m0 = min(r["coarse"]["ratio"] for r in rows)
    m1 = min(r["fine"]["ratio"] for r in rows)
    return Lemma2Report(p, c0, rows, m0, m1, abs(m1 - m0) / m0, skipped)


def segment_pair(g: GroupModel, length: float, c0: float, label: str = "", samples: int = 200, k: int = 0):
    """E = the horizontal segment ``exp(t X_k)``, ``|t| <= length / 2``; G its gauge
    neighborhood of radius ``0.9 c0 length``.

    The box is the smallest axis-aligned box holding G: on H^n the
    neighborhood of ``exp(t X_k)`` is sheared by ``2 t`` times the
    conjugate first-layer coordinate, which widens its center extent.
    """
    v = np.zeros(g.n1)
    v[k] = 1.0
    t = np.linspace(-length / 2, length / 2, samples)
    e = g.exp_horizontal(t[:, None] * v)
    rad = 0.9 * c0 * length

    def inside(x):
        x = np.asarray(x, float)
        flat = x.reshape(-1, g.dim)
        d = _distance_to_set(g, flat, e)
        return (d < rad).reshape(x.shape[:-1])

    w = np.array(g.weights, float)
    reach = (1.05 * rad) ** w
    if not g.is_abelian:
        reach[-1] += length * 1.05 * rad
    upper = reach.copy()
    upper[k] += length / 2
    return Lemma2Pair(g, e, inside, tuple(-upper), tuple(upper), label or f"segment L={length} c0={c0}")
