"""Discrete modulus of curve families on a cell grid.

The primal problem is

    minimize   sum_c vol_c rho_c^nu   subject to   L rho >= 1,  rho >= 0,

where ``L[gamma, c]`` is the horizontal arc length of curve ``gamma``
inside cell ``c``.  For fixed multipliers ``lam >= 0`` the Lagrangian is
minimized by the closed form

    rho_c = ((L^T lam)_c / (nu vol_c))^(1 / (nu - 1)),

and the resulting concave dual ``sum(lam) - (nu - 1) sum_c vol_c rho_c^nu``
is maximized by a bound-constrained quasi-Newton method.  Its gradient is
``1 - L rho``, the vector of admissibility violations.  On exit the
density of the final multipliers is repaired cell by cell along the
curves it still violates and rescaled so that ``min(L rho) = 1`` exactly;
the reported value is therefore the energy of an admissible density and
an upper bound on the discrete modulus, while the dual value is a lower
bound.  Convergence means the relative duality gap is below
``SolveOptions.gap_tol``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, sparse

from .curves import CurveFamily, HorizontalCurve
from .grids import Grid
from .groups import GroupInputError


class ConvergenceWarning(RuntimeWarning):
    pass


# warm restarts of the dual solve before a non-converged result is reported
_RESTARTS = 4


@dataclass
class SolveOptions:
    """Solver tolerances.

    ``tol`` bounds the admissibility violation of the returned density,
    ``rel_tol`` the relative change of the objective between iterations
    and ``gap_tol`` the relative duality gap of a modulus solve;
    ``max_iter`` caps iterations.
    """

    tol: float = 1e-6
    rel_tol: float = 1e-8
    max_iter: int = 100_000
    gap_tol: float = 1e-2

    def __post_init__(self):
        if not (self.tol > 0 and self.rel_tol > 0 and self.gap_tol > 0):
            raise GroupInputError("tolerances must be positive")
        if self.max_iter < 1:
            raise GroupInputError("iteration cap must be >= 1")


@dataclass
class SolveReport:
    value: float
    iterations: int
    primal_residual: float
    certificate: float
    wall_time: float
    converged: bool
    lower_bound: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def relative_gap(self) -> float | None:
        if self.lower_bound is None or self.value == 0:
            return None
        return (self.value - self.lower_bound) / self.value

    def to_record(self, timing: bool = True) -> dict:
        rec = {
            "value": self.value,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "certificate": self.certificate,
            "converged": self.converged,
            "lower_bound": self.lower_bound,
        }
        rec.update(self.extra)
        if timing:
            rec["wall_time"] = self.wall_time
        return rec


@dataclass
class GridDensity:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, float).reshape(self.grid.shape)
        if np.any(self.values < 0):
            raise GroupInputError("densities must be nonnegative")

    def energy(self, nu: float) -> float:
        return float(np.sum(self.values**nu) * self.grid.cell_volume)

    def __call__(self, pts) -> np.ndarray:
        """Piecewise-constant evaluation; zero outside the box."""
        idx = self.grid.locate(pts)
        flat = self.values.ravel()
        return np.where(idx >= 0, flat[np.maximum(idx, 0)], 0.0)


def _speeds(curve: HorizontalCurve) -> np.ndarray:
    if curve.tangents is not None:
        return np.linalg.norm(curve.tangents, axis=1)
    # chord speeds from intrinsic increments, spread to the samples
    g = curve.model
    seg = np.linalg.norm(g.first_layer(curve.increments()), axis=1) / np.diff(curve.t)
    return np.concatenate([[seg[0]], 0.5 * (seg[:-1] + seg[1:]), [seg[-1]]])


def incidence_matrix(family: CurveFamily, grid: Grid, fraction: float = 0.25):
    """Sparse arc-length incidence ``L[gamma, c]``.

    Each sample interval is cut into pieces of coordinate extent at most
    ``fraction`` of the smallest cell side; a piece contributes its
    horizontal length (mean speed times parameter step) to the cell that
    contains its midpoint.  Pieces outside the grid box are ignored.
    """
    if grid.ndim != family.model.dim:
        raise GroupInputError("grid dimension does not match the curve model")
    hmin = float(np.min(grid.spacing))
    rows, cols, vals = [], [], []
    for j, c in enumerate(family):
        sp = _speeds(c)
        if not np.any(sp > 0):
            raise GroupInputError(f"curve {j} has zero length")
        p = c.points
        d = np.diff(p, axis=0)
        ext = np.max(np.abs(d), axis=1)
        nsub = np.maximum(1, np.ceil(ext / (fraction * hmin)).astype(int))
        seg = np.repeat(np.arange(len(d)), nsub)
        off = np.concatenate([np.arange(n) for n in nsub])
        frac = (off + 0.5) / np.repeat(nsub, nsub)
        mid = p[seg] + frac[:, None] * d[seg]
        s = sp[seg] + frac * (sp[seg + 1] - sp[seg])
        length = s * np.diff(c.t)[seg] / np.repeat(nsub, nsub)
        idx = grid.locate(mid)
        keep = idx >= 0
        if not np.any(keep & (length > 0)):
            raise GroupInputError(f"curve {j} does not meet the grid box")
        rows.append(np.full(int(keep.sum()), j))
        cols.append(idx[keep])
        vals.append(length[keep])
    L = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(family), grid.size),
    )
    L.sum_duplicates()
    return L


def repair_density(L, rho) -> np.ndarray:
    """Make ``rho`` admissible with local changes, then rescale to ``min(L rho) = 1``.

    Every cell crossed by a violating curve ``gamma`` is multiplied by the
    largest factor ``1 / (L rho)_gamma`` among such curves, so each violating
    curve gains at least its missing fraction; the final uniform rescale
    removes the surplus on the tightest curve.
    """
    L = sparse.coo_matrix(L)
    achieved = np.asarray(sparse.csr_matrix(L) @ rho).ravel()
    need = np.where(achieved < 1.0, 1.0 / np.maximum(achieved, 1e-300), 1.0)
    factor = np.ones(L.shape[1])
    np.maximum.at(factor, L.col, need[L.row])
    out = rho * factor
    low = float((sparse.csr_matrix(L) @ out).min())
    if not low > 0:
        raise GroupInputError("a curve carries no density mass; the family is degenerate")
    return out / low


def modulus_from_incidence(
    L, cell_volume: float, nu: float, opts: SolveOptions | None = None
) -> tuple[SolveReport, np.ndarray]:
    """Solve the discrete modulus problem for a given incidence matrix."""
    opts = opts or SolveOptions()
    if not nu > 1:
        raise GroupInputError("the modulus exponent must exceed 1")
    start = time.perf_counter()
    L = sparse.csr_matrix(L)
    LT = L.T.tocsr()
    ncurves = L.shape[0]
    lengths = np.asarray(L.sum(axis=1)).ravel()
    if np.any(lengths <= 0):
        raise GroupInputError("a curve has zero length inside the grid")
    q = 1.0 / (nu - 1.0)
    vol = float(cell_volume)

    def density(lam):
        return (np.maximum(LT @ lam, 0.0) / (nu * vol)) ** q

    def negdual(lam):
        rho = density(lam)
        val = lam.sum() - (nu - 1.0) * vol * np.sum(rho**nu)
        grad = 1.0 - L @ rho
        return -val, -grad

    # the constant density 1/length(gamma) bounds each curve; start the
    # multipliers at the KKT values for the loosest such density
    rho0 = np.full(L.shape[1], 1.0 / lengths.min())
    lam0 = nu * vol * rho0[0] ** (nu - 1) * np.ones(ncurves) / max(
        1.0, float(np.max(np.asarray((L > 0).sum(axis=0))))
    )
    history = []

    def record(lam):
        history.append(-negdual(lam)[0])

    # L-BFGS-B may stop on a small relative decrease while the duality gap is
    # still open; warm restarts with a tighter decrease test close it
    lam, ftol, nit = lam0, opts.rel_tol, 0
    for _ in range(_RESTARTS):
        res = optimize.minimize(
            negdual,
            lam,
            jac=True,
            method="L-BFGS-B",
            bounds=[(0, None)] * ncurves,
            callback=record,
            options={
                "maxiter": opts.max_iter - nit,
                "maxfun": 4 * (opts.max_iter - nit),
                "ftol": ftol,
                "gtol": opts.tol * 1e-3,
                "maxcor": 30,
            },
        )
        lam, nit = res.x, nit + int(res.nit)
        lower = float(-res.fun)
        raw = density(lam)
        rho = repair_density(L, raw)
        value = float(vol * np.sum(rho**nu))
        gap = (value - lower) / value if value > 0 else 0.0
        if gap <= opts.gap_tol or nit >= opts.max_iter:
            break
        ftol *= 1e-2
    violation = float(max(0.0, 1.0 - (L @ raw).min()))
    achieved = L @ rho
    residual = float(max(0.0, 1.0 - achieved.min()))
    cert = float(achieved.min())
    converged = bool(np.isfinite(value) and residual <= opts.tol and gap <= opts.gap_tol)
    report = SolveReport(
        value=value,
        iterations=nit,
        primal_residual=residual,
        certificate=cert,
        wall_time=time.perf_counter() - start,
        converged=converged,
        lower_bound=lower,
        extra={
            "curves": ncurves,
            "dual_violation": violation,
            "duality_gap": gap,
            "dual_history": [float(v) for v in history[-5:]],
        },
    )
    return report, rho


def modulus(
    family: CurveFamily, grid: Grid, nu: float | None = None, opts: SolveOptions | None = None
) -> tuple[SolveReport, GridDensity]:
    """Upper-bound-sound discrete modulus of ``family`` with densities on ``grid``.

    ``nu`` defaults to the homogeneous dimension of the family's model.
    """
    nu = float(family.model.nu if nu is None else nu)
    L = incidence_matrix(family, grid)
    report, rho = modulus_from_incidence(L, grid.cell_volume, nu, opts)
    return report, GridDensity(grid, rho)
