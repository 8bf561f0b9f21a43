"""Numerical witnesses for the mapping theorems: the moduli inequality for
Q-homeomorphisms, the change of variables behind it, fiberwise absolute
continuity, and finiteness of the inverse map's horizontal energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curves import CurveFamily, HorizontalCurve
from .families import bounding_box, curve_from_points
from .foliation import FoliationSpec, _axis
from .grids import Grid
from .groups import GroupInputError, GroupModel
from .horizontal import (
    dilatation_from_differential,
    horizontal_differential,
    jacobian_from_differential,
    operator_norm,
)
from .maps import ContactMap, inverse_map
from .modulus import SolveOptions, modulus


class VerificationRefused(RuntimeError):
    """A precondition of the check (convergence, injectivity) does not hold."""


def round_trip_error(phi: ContactMap, pts) -> float:
    """Largest coordinate error of ``inverse(forward(p))`` and ``forward(inverse(p))``."""
    pts = phi.model.check(pts)
    a = np.max(np.abs(phi.inverse(phi.forward(pts)) - pts))
    b = np.max(np.abs(phi.forward(phi.inverse(pts)) - pts))
    return float(max(a, b))


def contact_residual(phi: ContactMap, base, k: int, dt: float) -> float:
    """Center part of ``phi(p)^-1 phi(p exp(dt X_k))`` divided by ``dt``.

    A contact map sends horizontal curves to horizontal curves, so this
    non-horizontal velocity vanishes as ``dt -> 0`` (at rate dt^2 for smooth maps).
    """
    g = phi.model
    if g.is_abelian:
        return 0.0
    base = g.check(base)
    a = phi.forward(base)
    b = phi.forward(g.multiply(base, _axis(g, k, np.full(base.shape[:-1], dt))))
    inc = g.multiply(g.inverse(a), b)
    return float(np.max(np.abs(inc[..., g.n1 :])) / dt)


@dataclass
class QField:
    grid: Grid
    values: np.ndarray
    degenerate: np.ndarray
    failed: np.ndarray

    @property
    def usable(self) -> np.ndarray:
        return ~(self.degenerate | self.failed)


def distortion_field(phi: ContactMap, grid: Grid) -> QField:
    """``Q(y) = K_O(phi^-1(y), phi)`` at the cell centers of an image grid.

    Cells where the inverse cannot be evaluated or returns non-finite
    values are flagged as failed; cells with ``J = 0`` are flagged as
    degenerate.  Neither is fatal.
    """
    g = phi.model
    y = grid.flat_centers()
    with np.errstate(all="ignore"):
        try:
            x = phi.inverse(y)
        except Exception:  # per-cell fallback keeps the field usable
            x = np.full_like(y, np.nan)
            for i, yi in enumerate(y):
                try:
                    x[i] = phi.inverse(yi)
                except Exception:
                    pass
    failed = ~np.all(np.isfinite(x), axis=1)
    vals = np.zeros(len(y))
    degen = np.zeros(len(y), bool)
    ok = ~failed
    if np.any(ok):
        with np.errstate(all="ignore"):
            d = horizontal_differential(g, phi, x[ok])
        bad = ~np.all(np.isfinite(d), axis=(1, 2))
        k = np.full(int(ok.sum()), np.nan)
        deg = np.zeros(int(ok.sum()), bool)
        if np.any(~bad):
            dist = dilatation_from_differential(g, d[~bad])
            k[~bad], deg[~bad] = dist.value, dist.degenerate
        vals[ok] = np.where(bad, 0.0, k)
        degen[ok] = deg
        failed[np.nonzero(ok)[0][bad]] = True
    shape = grid.shape
    return QField(grid, vals.reshape(shape), degen.reshape(shape), failed.reshape(shape))


def pushforward_family(mapping, family: CurveFamily, domain: Grid | None = None):
    """Image of each curve under ``mapping`` (a ContactMap or a callable).

    Parameterization is preserved; tangent coefficients are recomputed
    from centered group-intrinsic first differences.  Curves with a point
    that cannot be mapped, or that leaves ``domain``, are dropped.
    Returns ``(family, dropped)``.
    """
    f = mapping.forward if isinstance(mapping, ContactMap) else mapping
    g = family.model
    out, dropped = [], 0
    for c in family:
        with np.errstate(all="ignore"):
            try:
                pts = np.asarray(f(c.points), float)
            except Exception:
                dropped += 1
                continue
        if not np.all(np.isfinite(pts)) or (domain is not None and not np.all(domain.contains(pts))):
            dropped += 1
            continue
        out.append(curve_from_points(g, c.t, pts))
    if not out:
        raise GroupInputError("every curve was dropped by the pushforward")
    desc = dict(family.descriptor, pushforward=getattr(mapping, "name", "callable"), dropped=dropped)
    return CurveFamily(g, out, desc), dropped


def grid_around(family: CurveFamily, shape, pad: float = 0.02) -> Grid:
    lo, hi = bounding_box(family, pad)
    return Grid(tuple(lo), tuple(hi), tuple(shape))


def matched_grid(family: CurveFamily, spacing, pad: float = 0.02) -> Grid:
    """Grid around ``family`` whose cells have exactly the given spacing."""
    lo, hi = bounding_box(family, pad)
    h = np.asarray(spacing, float)
    shape = np.maximum(1, np.ceil((hi - lo) / h - 1e-9)).astype(int)
    return Grid(tuple(lo), tuple(lo + shape * h), tuple(int(n) for n in shape))


def pulled_spacing(phi: ContactMap, image_grid: Grid, q: QField | None = None) -> np.ndarray:
    """Image spacing transported by the typical volume scale of ``phi^-1``.

    The scale ``lam`` is the median of ``|J(y, phi^-1)|^(1/nu)`` over the
    image cells and axis ``i`` is scaled by ``lam^{w_i}``.  Dilations then
    map image cells onto domain cells and isometries keep the spacing, so
    both moduli carry a comparable discretization bias; maps that shrink
    some direction get finer domain cells.
    """
    g = phi.model
    y = image_grid.flat_centers()
    with np.errstate(all="ignore"):
        jac = jacobian_from_differential(g, horizontal_differential(g, inverse_map(phi), y))
    n = np.abs(jac) ** (1.0 / g.nu)
    n = n[np.isfinite(n) & (n > 0)]
    lam = float(np.median(n)) if n.size else 1.0
    return image_grid.spacing * lam ** np.asarray(g.weights, float)


@dataclass
class QInequalityReport:
    map: dict
    lhs: float
    rhs: float
    image_modulus: float
    slack: float
    gap: float
    excluded_cells: int
    dropped_curves: int
    conformal: bool = False
    equality_tol: float = 0.03
    extra: dict = field(default_factory=dict)

    @property
    def near_equality(self) -> bool:
        return abs(self.gap) <= self.equality_tol

    @property
    def passed(self) -> bool:
        ok = self.lhs <= self.rhs * (1 + self.slack)
        return ok and (self.near_equality or not self.conformal)

    def to_record(self) -> dict:
        d = dict(self.__dict__)
        d.update(near_equality=self.near_equality, passed=self.passed)
        return d


CONFORMAL = frozenset({"identity", "translation", "dilation", "rotation"})


def verify_q_inequality(
    phi: ContactMap,
    family: CurveFamily,
    image_grid: Grid,
    domain_grid: Grid | None = None,
    opts: SolveOptions | None = None,
    slack: float = 0.05,
) -> QInequalityReport:
    """Check ``M(phi^-1 Gamma) <= sum_c Q_c rho_c^nu vol_c``.

    ``rho`` is the near-extremal admissible density of ``Gamma`` on
    ``image_grid`` and ``Q = K_O(phi^-1(y), phi)``.  ``domain_grid``
    defaults to a grid around the pulled-back family with the spacing of
    :func:`pulled_spacing`.
    Degenerate or failed cells are excluded from the sum and counted.

    For conformal catalog maps the report also demands near-equality,
    ``|RHS - LHS| <= (0.02 + gap_tol) RHS``: each side is then the modulus
    of congruent families, so only discretization and solver error remain.
    """
    opts = opts or SolveOptions()
    g = family.model
    nu = g.nu
    img_rep, rho = modulus(family, image_grid, nu, opts)
    if not img_rep.converged:
        raise VerificationRefused("modulus of the image family did not converge")
    q = distortion_field(phi, image_grid)
    use = q.usable
    rhs = float(np.sum(q.values[use] * rho.values[use] ** nu) * image_grid.cell_volume)
    pulled, dropped = pushforward_family(phi.inverse, family)
    domain_grid = domain_grid or matched_grid(pulled, pulled_spacing(phi, image_grid))
    dom_rep, _ = modulus(pulled, domain_grid, nu, opts)
    if not dom_rep.converged:
        raise VerificationRefused("modulus of the pulled-back family did not converge")
    lhs = dom_rep.value
    return QInequalityReport(
        map=phi.describe(),
        lhs=lhs,
        rhs=rhs,
        image_modulus=img_rep.value,
        slack=slack,
        gap=(rhs - lhs) / rhs if rhs > 0 else 0.0,
        excluded_cells=int((~use).sum()),
        dropped_curves=dropped,
        conformal=phi.name in CONFORMAL,
        equality_tol=0.02 + opts.gap_tol,
        extra={
            "family": {k: v for k, v in family.descriptor.items() if k != "direction"},
            "lhs_gap": dom_rep.relative_gap,
            "image_gap": img_rep.relative_gap,
        },
    )


@dataclass
class ChangeOfVariablesReport:
    map: dict
    image_side: float
    domain_side: float
    tol: float

    @property
    def rel_error(self) -> float:
        return abs(self.image_side - self.domain_side) / max(self.image_side, self.domain_side)

    @property
    def passed(self) -> bool:
        return self.rel_error <= self.tol

    def to_record(self) -> dict:
        d = dict(self.__dict__)
        d.update(rel_error=self.rel_error, passed=self.passed)
        return d


def change_of_variables_check(
    phi: ContactMap,
    grid: Grid,
    mask=None,
    image_shape=None,
    tol: float = 0.03,
) -> ChangeOfVariablesReport:
    """Compare ``sum_{phi(F)} K_O(phi^-1 y) vol`` with ``sum_F |D_H phi|^nu vol``.

    ``F`` is the masked part of ``grid``; ``phi(F)`` is rasterized on a
    grid of ``image_shape`` (default: the shape of ``grid``) covering the
    image of the cell corners, a cell belonging to it iff the preimage of
    its center lies in an F-cell.
    """
    g = phi.model
    mask = np.ones(grid.shape, bool) if mask is None else np.asarray(mask, bool).reshape(grid.shape)
    x = grid.flat_centers()[mask.ravel()]
    scale = max(1.0, float(np.max(np.abs(x))))
    if round_trip_error(phi, x) > 1e-8 * scale:
        raise VerificationRefused("map is not injective on the sampled region to 1e-8")
    d = horizontal_differential(g, phi, x)
    use = np.abs(np.linalg.det(d)) > 0
    domain_side = float(np.sum(operator_norm(d[use]) ** g.nu) * grid.cell_volume)
    # image box from the images of all cell corners of F
    corners = np.array(np.meshgrid(*[[-0.5, 0.5]] * grid.ndim, indexing="ij")).reshape(grid.ndim, -1).T
    img = phi.forward((x[:, None, :] + corners[None] * grid.spacing).reshape(-1, grid.ndim))
    lo, hi = img.min(axis=0), img.max(axis=0)
    pad = 1e-9 * np.maximum(hi - lo, 1.0)
    igrid = Grid(tuple(lo - pad), tuple(hi + pad), tuple(image_shape or grid.shape))
    y = igrid.flat_centers()
    pre = phi.inverse(y)
    idx = grid.locate(pre)
    inside = np.zeros(len(y), bool)
    inside[idx >= 0] = mask.ravel()[idx[idx >= 0]]
    q = distortion_field(phi, igrid)
    keep = inside & q.usable.ravel()
    image_side = float(np.sum(q.values.ravel()[keep]) * igrid.cell_volume)
    return ChangeOfVariablesReport(phi.describe(), image_side, domain_side, tol)


@dataclass
class ACLReport:
    map: dict
    k: int
    steps: int
    variations: np.ndarray
    integrals: np.ndarray
    tol: float

    @property
    def errors(self) -> np.ndarray:
        return np.abs(self.variations - self.integrals) / self.integrals

    @property
    def max_error(self) -> float:
        return float(np.max(self.errors))

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol

    def to_record(self) -> dict:
        return {
            "map": self.map,
            "k": self.k,
            "steps": self.steps,
            "max_error": self.max_error,
            "mean_variation": float(np.mean(self.variations)),
            "mean_integral": float(np.mean(self.integrals)),
            "tol": self.tol,
            "passed": self.passed,
        }


def transversal_samples(g: GroupModel, spec: FoliationSpec, count: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    s = rng.uniform(-0.9 * spec.M, 0.9 * spec.M, (count, g.dim))
    s[:, spec.k] = 0.0
    return s


def acl_transversal_check(
    phi: ContactMap,
    spec: FoliationSpec,
    sample_count: int = 16,
    steps: int = 64,
    seed: int = 0,
    tol: float = 0.03,
    reference_factor: int = 16,
) -> ACLReport:
    """Fiberwise variation of ``phi`` against its horizontal speed integral.

    For transversal points ``s`` the polygonal gauge variation of
    ``t -> phi(s exp(t X_k))`` on ``steps`` intervals is compared with
    ``int |D_H phi(s exp(t X_k)) e_k| dt`` evaluated by the trapezoid rule
    on ``reference_factor`` times as many intervals.
    """
    g = phi.model
    spec.validate(g)
    s = transversal_samples(g, spec, sample_count, seed)
    var, integ = [], []
    e_k = np.zeros(g.n1)
    e_k[spec.k] = 1.0
    for base in s:
        t = np.linspace(-spec.M, spec.M, steps + 1)
        pts = phi.forward(g.multiply(base, _axis(g, spec.k, t)))
        var.append(float(np.sum(g.gauge(g.multiply(g.inverse(pts[:-1]), pts[1:])))))
        tf = np.linspace(-spec.M, spec.M, reference_factor * steps + 1)
        d = horizontal_differential(g, phi, g.multiply(base, _axis(g, spec.k, tf)))
        integ.append(float(np.trapezoid(np.linalg.norm(d @ e_k, axis=-1), tf)))
    return ACLReport(phi.describe(), spec.k, steps, np.array(var), np.array(integ), tol)


def acl_refinement(
    phi: ContactMap, spec: FoliationSpec, steps=(16, 32, 64), floor: float = 1e-12, **kw
) -> dict:
    """Mean ACL discrepancy at each step count.

    ``halves`` holds when every doubling of the step count at least halves
    the error, errors below ``floor`` counting as exact.  Reductions are
    reported only between errors above the floor.
    """
    errs = [float(np.mean(acl_transversal_check(phi, spec, steps=n, **kw).errors)) for n in steps]
    pairs = list(zip(errs[:-1], errs[1:]))
    ratios = [a / b for a, b in pairs if a > floor and b > floor]
    halves = all(b <= floor or b <= 0.5 * a for a, b in pairs)
    return {"steps": list(steps), "errors": errs, "reductions": ratios, "halves": halves}


@dataclass
class InverseEnergyReport:
    map: dict
    resolutions: list
    energies: list
    blowup_fraction: list
    tol: float

    @property
    def stability(self) -> float:
        e1, e2 = self.energies[-2], self.energies[-1]
        return abs(e2 - e1) / e1

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.energies)))

    @property
    def flagged(self) -> bool:
        return max(self.blowup_fraction) > 0.01

    @property
    def passed(self) -> bool:
        return self.finite and not self.flagged and self.stability <= self.tol

    def to_record(self) -> dict:
        d = dict(self.__dict__)
        d.update(stability=self.stability, finite=self.finite, flagged=self.flagged, passed=self.passed)
        return d


def inverse_energy_check(
    phi: ContactMap,
    lower,
    upper,
    resolutions=(16, 32, 64),
    tol: float = 0.05,
    blowup: float = 1e8,
) -> InverseEnergyReport:
    """``E(res) = sum |D_H(phi^-1)| vol`` over a box of the image domain.

    Cells where the inverse differential is non-finite or exceeds
    ``blowup`` count as blow-up cells; more than 1% of them flags the
    finite-distortion surrogate as failing.
    """
    if len(resolutions) < 2:
        raise GroupInputError("need at least two resolutions")
    g = phi.model
    inv = inverse_map(phi)
    energies, fractions = [], []
    for res in resolutions:
        grid = Grid.cube(lower, upper, res)
        y = grid.flat_centers()
        with np.errstate(all="ignore"):
            n = operator_norm(horizontal_differential(g, inv, y))
        bad = ~np.isfinite(n) | (n > blowup)
        fractions.append(float(bad.mean()))
        energies.append(float(np.sum(np.where(bad, 0.0, n)) * grid.cell_volume))
    return InverseEnergyReport(phi.describe(), list(resolutions), energies, fractions, tol)
