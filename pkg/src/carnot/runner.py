"""Execute a validated run config and collect its report and artifacts."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import config as C
from .capacity import (
    Condenser,
    annulus_condenser,
    gauge_ring_condenser,
    p_capacity,
    ring_capacity_oracle,
    slab_condenser,
)
from .checks import dilation_scaling_check, equality_check, lemma2_bound_check, segment_pair
from .families import fiber_family, radial_segments, vertical_segments
from .foliation import FoliationSpec, doubling_quotient, foliation_measure_hitting, tube_measure
from .grids import Grid
from .groups import GroupInputError, GroupModel, model_from_name
from .maps import catalog_map
from .modulus import SolveOptions, modulus
from .report import ReportRecord, Verdict
from .setfunctions import (
    capped_volume_setfn,
    default_radii,
    density_setfn,
    setfn_derivative,
    setfn_lower_integral_check,
    superadditive_setfn,
    volume_setfn,
)
from .verify import (
    VerificationRefused,
    acl_refinement,
    acl_transversal_check,
    change_of_variables_check,
    grid_around,
    inverse_energy_check,
    verify_q_inequality,
)

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2, 3


@dataclass
class Outcome:
    record: ReportRecord
    tables: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)

    @property
    def status(self) -> int:
        if not self.record.converged:
            return EXIT_NOT_CONVERGED
        return EXIT_OK if self.record.passed else EXIT_FAILED


def solve_options(cfg) -> SolveOptions:
    s = cfg.solver
    return SolveOptions(tol=s.tol, rel_tol=s.rel_tol, max_iter=s.max_iter, gap_tol=s.gap_tol)


def rel_error(value: float, expected: float) -> float:
    return abs(value - expected) / abs(expected)


def tolerance_verdict(name, value, expected, tol) -> Verdict:
    err = rel_error(value, expected)
    return Verdict(name, err <= tol, err, tol, f"value {value:.6g} against {expected:.6g}")


# -- builders -----------------------------------------------------------------


def build_family(g: GroupModel, spec):
    if spec.kind == "vertical":
        return vertical_segments(g, spec.width, spec.height, spec.count, spec.samples)
    if spec.kind == "radial":
        return radial_segments(g, spec.r_in, spec.r_out, spec.count, spec.samples)
    if spec.k >= g.n1:
        raise GroupInputError(f"fiber axis {spec.k} is not a first-layer axis")
    return fiber_family(g, spec.k, spec.length, spec.lower, spec.upper, spec.per_axis, spec.samples)


def family_oracle(spec) -> tuple[float, float] | None:
    """Closed-form modulus and its acceptance tolerance, when one exists."""
    if spec.kind == "vertical":
        return spec.width / spec.height, 0.02
    if spec.kind == "radial":
        return 2 * math.pi / math.log(spec.r_out / spec.r_in), 0.03
    return None


def family_grid(g: GroupModel, spec, res, box) -> Grid:
    if box is not None:
        return Grid.cube(box.lower, box.upper, box.res)
    shape = (res,) * g.dim if isinstance(res, int) else tuple(res)
    if spec.kind == "vertical":
        if isinstance(res, int):
            per = res / max(spec.width, spec.height)
            shape = (max(1, round(per * spec.width)), max(1, round(per * spec.height)))
        return Grid((0.0, 0.0), (spec.width, spec.height), shape)
    if spec.kind == "radial":
        R = spec.r_out
        return Grid((-R, -R), (R, R), shape)
    return grid_around(build_family(g, spec), shape)


def build_condenser(g: GroupModel, spec, res: int | None = None) -> Condenser:
    res = spec.res if res is None else res
    if spec.kind == "annulus":
        if not (g.is_abelian and g.dim == 2):
            raise GroupInputError("the annulus condenser lives in R2")
        return annulus_condenser(g, spec.r_in, spec.r_out, res)
    if spec.kind == "slab":
        if len(spec.sides) != g.dim or not g.is_abelian:
            raise GroupInputError("slab sides must match an abelian model's dimension")
        return slab_condenser(g, spec.sides, res)
    if spec.kind == "ring":
        return gauge_ring_condenser(g, spec.r_in, spec.r_out, res)
    grid = Grid.cube(spec.lower, spec.upper, res)

    def box(b):
        lo, hi = (np.asarray(x, float) for x in b)
        return lambda x: np.all((x >= lo) & (x <= hi), axis=-1)

    return Condenser.from_predicates(g, grid, box(spec.f0), box(spec.f1), labels={"kind": "boxes"})


def condenser_oracle(g: GroupModel, spec, p: float) -> tuple[float, float] | None:
    if spec.kind == "annulus" and p == g.nu:
        return ring_capacity_oracle(g, spec.r_in, spec.r_out), 0.03
    if spec.kind == "slab":
        s = np.asarray(spec.sides, float)
        return float(np.prod(s[1:]) / s[0] ** (p - 1)), 0.02
    return None


# -- commands -----------------------------------------------------------------


def run_modulus(cfg, g, opts, out: Outcome):
    fam = build_family(g, cfg.family)
    grid = family_grid(g, cfg.family, cfg.res, cfg.grid)
    rep, rho = modulus(fam, grid, g.nu, opts)
    rec = out.record
    rec.results = {"modulus": rep.value, "lower_bound": rep.lower_bound, "curves": len(fam), "grid": grid.header()}
    rec.residuals = {"primal_residual": rep.primal_residual, "duality_gap": rep.relative_gap}
    rec.timing = {"solve": rep.wall_time}
    rec.converged = rep.converged
    rec.verdicts.append(Verdict("converged", rep.converged, rep.relative_gap, opts.gap_tol))
    expected = (cfg.expect.value, cfg.expect.rel_tol) if cfg.expect else family_oracle(cfg.family)
    if expected:
        rec.verdicts.append(tolerance_verdict("oracle", rep.value, *expected))
    out.tables["dual_history"] = (["step", "dual_value"], list(enumerate(rep.extra["dual_history"])))
    out.grids["density"] = (grid, rho.values)


def run_capacity(cfg, g, opts, out: Outcome):
    cond = build_condenser(g, cfg.condenser)
    res = p_capacity(cond, cfg.p, opts)
    rec = out.record
    rec.results = {"capacity": res.value, "p": cfg.p, "free_cells": res.report.extra["free_cells"]}
    rec.residuals = {"boundary_residual": res.report.primal_residual}
    rec.timing = {"solve": res.report.wall_time}
    rec.converged = res.report.converged
    rec.verdicts.append(Verdict("converged", res.report.converged, None, opts.rel_tol))
    expected = (cfg.expect.value, cfg.expect.rel_tol) if cfg.expect else condenser_oracle(g, cfg.condenser, cfg.p)
    if expected:
        rec.verdicts.append(tolerance_verdict("oracle", res.value, *expected))
    if cfg.oracle and cfg.condenser.kind == "ring" and cfg.p == g.nu:
        ref = ring_capacity_oracle(g, cfg.condenser.r_in, cfg.condenser.r_out, seed=cfg.solver.seed + 5)
        rec.results["reference_log_potential"] = ref
        rec.results["relative_deviation_from_reference"] = (res.value - ref) / ref
    hist = res.report.extra["energy_history"]
    out.tables["energy_history"] = (["step", "energy"], list(enumerate(hist)))
    out.grids["potential"] = (cond.grid, res.potential)


def run_equality(cfg, g, opts, out: Outcome):
    rec = out.record
    resolutions = cfg.refinements or (cfg.condenser.res,)
    rows = []
    for res in resolutions:
        cond = build_condenser(g, cfg.condenser, res)
        t0 = time.perf_counter()
        rep = equality_check(cond, opts, jitter=cfg.jitter, seed=cfg.solver.seed)
        rows.append(dict(rep.to_record(), res=res))
        rec.timing[f"res_{res}"] = time.perf_counter() - t0
        rec.converged &= rep.converged
    rec.results = {"rows": rows, "bias": rows[-1]["bias"]}
    gaps = [r["gap"] for r in rows]
    if cfg.refinements:
        mono = all(b < a for a, b in zip(gaps[:-1], gaps[1:]))
        rec.verdicts.append(Verdict("gap_decreases", mono, gaps[-1], None, f"gaps {gaps}"))
    else:
        rec.verdicts.append(Verdict("gap", gaps[0] <= cfg.gap_tol, gaps[0], cfg.gap_tol))
    out.tables["equality"] = (
        ["res", "modulus", "capacity", "gap", "curves"],
        [(r["res"], r["modulus"], r["capacity"], r["gap"], r["curves"]) for r in rows],
    )


def run_scaling(cfg, g, opts, out: Outcome):
    cond = build_condenser(g, cfg.condenser)
    rep = dilation_scaling_check(cond, cfg.p, cfg.ts, opts, cfg.tol)
    rec = out.record
    rec.results = rep.to_record()
    worst = max(r["rel_error"] for r in rep.rows)
    rec.verdicts.append(Verdict("homogeneity", rep.passed, worst, cfg.tol))
    out.tables["scaling"] = (
        ["t", "value", "expected", "rel_error"],
        [(r["t"], r["value"], r["expected"], r["rel_error"]) for r in rep.rows],
    )


def run_lemma2(cfg, g, opts, out: Outcome):
    pairs = [segment_pair(g, p.length, cfg.c0, p.label, k=p.k) for p in cfg.pairs]
    rep = lemma2_bound_check(pairs, cfg.p, cfg.res, cfg.refine, cfg.c0, opts)
    rec = out.record
    rec.results = rep.to_record()
    rec.converged = all(r[k]["converged"] for r in rep.rows for k in ("coarse", "fine"))
    positive = rep.minimum is not None and rep.minimum > 0 and rep.refined_minimum > 0
    rec.verdicts.append(Verdict("minimum_positive", positive, rep.refined_minimum, 0.0))
    if cfg.stability_tol is not None:
        ok = rep.stability is not None and rep.stability <= cfg.stability_tol
        rec.verdicts.append(Verdict("refinement_stable", ok, rep.stability, cfg.stability_tol))
    out.tables["lemma2"] = (
        ["label", "res", "capacity", "ratio"],
        [(r[k]["label"], r[k]["res"], r[k]["capacity"], r[k]["ratio"]) for r in rep.rows for k in ("coarse", "fine")],
    )


DEFAULT_CENTERS = {
    2: ((0.0, 0.0), (0.237, 0.113), (-0.419, 0.2071), (0.0317, 0.5), (0.61, -0.33)),
    3: (
        (0.0, 0.0, 0.0),
        (0.237, 0.113, 0.0),
        (-0.419, 0.2071, 0.3),
        (0.0317, 0.5, 0.1),
        (0.61, -0.33, -0.2),
    ),
}


def run_foliation(cfg, g, opts, out: Outcome):
    spec = FoliationSpec(cfg.k, cfg.M, cfg.r)
    spec.validate(g)
    rec = out.record
    if cfg.check == "hitting":
        centers = cfg.centers or DEFAULT_CENTERS.get(g.dim)
        if not centers:
            raise GroupInputError("no default centers for this model; list them under 'centers'")
        rows = []
        for c in centers:
            for r in cfg.radii or (0.2, 0.1, 0.05):
                h = foliation_measure_hitting(g, spec, c, r, cfg.res)
                rows.append({"center": list(c), "radius": r, "measure": h.measure, "ratio": h.ratio})
        ratios = np.array([row["ratio"] for row in rows])
        spread = float((ratios.max() - ratios.min()) / ratios.mean())
        rec.results = {"rows": rows, "constant": float(ratios.mean()), "spread": spread}
        expected = cfg.expect
        if expected is None and g.is_abelian and g.dim == 2:
            expected = C.Expect(value=2 / math.sqrt(math.pi), rel_tol=0.02)
        if expected is not None:
            worst = float(np.max(np.abs(ratios - expected.value) / expected.value))
            rec.verdicts.append(Verdict("ratio_matches", worst <= expected.rel_tol, worst, expected.rel_tol))
        rec.verdicts.append(Verdict("center_independent", spread <= cfg.spread_tol, spread, cfg.spread_tol))
        out.tables["hitting"] = (
            ["center", "radius", "measure", "ratio"],
            [(" ".join(map(str, r["center"])), r["radius"], r["measure"], r["ratio"]) for r in rows],
        )
    elif cfg.check == "tube":
        base = np.zeros(g.dim) if cfg.base is None else np.asarray(cfg.base, float)
        radii = cfg.radii or default_radii()
        rows = []
        for r in radii:
            t = tube_measure(g, FoliationSpec(cfg.k, cfg.M, float(r)), base, volume_setfn(), cfg.res)
            rows.append({"radius": float(r), "quotient": t.ratio, "clipped": t.clipped, "cells": t.cells})
        q = np.array([row["quotient"] for row in rows])
        rec.results = {"rows": rows, "max_quotient": float(q.max()), "min_quotient": float(q.min())}
        bounded = bool(np.all(np.isfinite(q)) and q.min() > 0 and q.max() <= cfg.bound)
        rec.verdicts.append(Verdict("quotients_bounded", bounded, float(q.max()), cfg.bound))
        out.series["tube_quotient"] = ([r["radius"] for r in rows], {"quotient": q.tolist()})
        out.tables["tube"] = (["radius", "quotient"], [(r["radius"], r["quotient"]) for r in rows])
    else:
        center = cfg.centers[0] if cfg.centers else (0.0,) * g.dim
        r = cfg.radii[-1] if cfg.radii else 0.1
        qs = [doubling_quotient(g, spec, center, r, res) for res in cfg.resolutions]
        stab = abs(qs[-1] - qs[-2]) / qs[-2] if len(qs) > 1 else 0.0
        rec.results = {"center": list(center), "radius": r, "resolutions": list(cfg.resolutions), "quotients": qs}
        ok = bool(np.all(np.isfinite(qs)) and stab <= 0.02)
        rec.verdicts.append(Verdict("doubling_stable", ok, stab, 0.02))


def _smooth_density(x):
    return 1.0 + x[..., 0] ** 2


def run_setfn(cfg, g, opts, out: Outcome):
    rec = out.record
    fns = {
        "volume": (volume_setfn(), lambda x: np.ones(np.shape(x)[:-1])),
        "density": (density_setfn(_smooth_density, "1 + x1^2"), _smooth_density),
        "volume-plus-square": (superadditive_setfn(), None),
        "capped-volume": (capped_volume_setfn(0.5), None),
    }
    phi, w = fns[cfg.function]
    if cfg.check == "derivative":
        if w is None:
            raise GroupInputError(f"{cfg.function} has no pointwise density to compare with")
        pts = cfg.points or ((0.0,) * g.dim,)
        radii = default_radii(cfg.r0, cfg.levels)
        rows = []
        for x in pts:
            d = setfn_derivative(phi, g, x, radii, cfg.ball_res)
            target = float(w(np.asarray(x, float)))
            rows.append({"point": list(x), "estimate": d.value, "target": target,
                         "rel_error": rel_error(d.value, target), "cauchy_spread": d.cauchy_spread(),
                         "quotients": d.quotients.tolist()})
        worst = max(r["rel_error"] for r in rows)
        rec.results = {"radii": radii.tolist(), "rows": rows}
        rec.verdicts.append(Verdict("derivative_matches", worst <= cfg.tol, worst, cfg.tol))
        spread = max(r["cauchy_spread"] for r in rows)
        rec.verdicts.append(Verdict("quotients_cauchy", spread <= 0.01, spread, 0.01))
        out.series["quotients"] = (radii.tolist(), {str(r["point"]): r["quotients"] for r in rows})
    else:
        box = cfg.region or C.BoxSpec(lower=(0.0,) * g.dim, upper=(1.0,) * g.dim, res=16)
        grid = Grid.cube(box.lower, box.upper, box.res)
        rep = setfn_lower_integral_check(phi, g, grid, ball_res=cfg.ball_res, tol=0.03)
        rec.results = {"integral": rep.integral, "phi_of_u": rep.phi_of_u, "cells": rep.cells}
        rec.verdicts.append(Verdict("lower_integral", rep.passed, rep.integral / rep.phi_of_u - 1, 0.03))
        if cfg.expect_strict:
            rec.verdicts.append(Verdict("strict", rep.strict, rep.integral / rep.phi_of_u, None))


def default_families(g: GroupModel):
    if g.is_abelian and g.dim == 2:
        return (C.VerticalFamily(kind="vertical", count=256),)
    if not g.is_abelian and g.n == 1:
        return (C.FiberFamily(kind="fibers", k=0), C.FiberFamily(kind="fibers", k=1))
    raise GroupInputError("no default test families for this model; list them under 'families'")


def run_qverify(cfg, g, opts, out: Outcome):
    rec = out.record
    maps = [catalog_map(g, m.name, **m.params) for m in cfg.maps]
    sections: dict = {}
    if "inequality" in cfg.checks:
        rows = []
        for spec in cfg.families or default_families(g):
            fam = build_family(g, spec)
            res = 128 if spec.kind == "vertical" else cfg.res
            grid = family_grid(g, spec, res, None)
            for phi in maps:
                try:
                    rep = verify_q_inequality(phi, fam, grid, opts=opts, slack=cfg.slack)
                except VerificationRefused as exc:
                    rec.converged = False
                    rec.verdicts.append(Verdict(f"qn:{phi.name}:{spec.kind}", False, None, None, str(exc)))
                    continue
                row = dict(rep.to_record(), family=fam.descriptor.get("kind"), k=getattr(spec, "k", None))
                rows.append(row)
                tag = f"qn:{phi.name}:{spec.kind}{row['k'] if row['k'] is not None else ''}"
                rec.verdicts.append(Verdict(tag, rep.passed, rep.gap, rep.equality_tol if rep.conformal else cfg.slack,
                                            f"lhs {rep.lhs:.6g} rhs {rep.rhs:.6g}"))
        sections["inequality"] = rows
        out.tables["qn"] = (
            ["map", "family", "k", "lhs", "rhs", "gap", "passed"],
            [(r["map"]["name"], r["family"], r["k"], r["lhs"], r["rhs"], r["gap"], r["passed"]) for r in rows],
        )
    box = cfg.region or C.BoxSpec(lower=(0.0,) * g.dim, upper=(1.0,) * g.dim, res=cfg.res)
    if "change-of-variables" in cfg.checks:
        rows = []
        grid = Grid.cube(box.lower, box.upper, box.res)
        for phi in maps:
            rep = change_of_variables_check(phi, grid, tol=cfg.cov_tol)
            rows.append(rep.to_record())
            rec.verdicts.append(Verdict(f"cov:{phi.name}", rep.passed, rep.rel_error, cfg.cov_tol))
        sections["change_of_variables"] = rows
    if "acl" in cfg.checks:
        rows = []
        for phi in maps:
            for k in cfg.acl_k:
                spec = FoliationSpec(k, 1.0, 0.1)
                rep = acl_transversal_check(phi, spec, cfg.acl_samples, cfg.acl_steps[-1], cfg.solver.seed, cfg.acl_tol)
                ref = acl_refinement(phi, spec, cfg.acl_steps, sample_count=cfg.acl_samples, seed=cfg.solver.seed)
                rows.append(dict(rep.to_record(), refinement=ref))
                rec.verdicts.append(Verdict(f"acl:{phi.name}:k{k}", rep.passed, rep.max_error, cfg.acl_tol))
                rec.verdicts.append(Verdict(f"acl-refine:{phi.name}:k{k}", ref["halves"], None, 0.5,
                                            f"errors {ref['errors']}"))
        sections["acl"] = rows
    if "inverse-energy" in cfg.checks:
        rows = []
        lo = tuple(-1.0 for _ in range(g.dim)) if cfg.region is None else box.lower
        hi = tuple(1.0 for _ in range(g.dim)) if cfg.region is None else box.upper
        for phi in maps:
            rep = inverse_energy_check(phi, lo, hi, cfg.inverse_resolutions, cfg.inverse_tol)
            rows.append(rep.to_record())
            rec.verdicts.append(Verdict(f"inverse:{phi.name}", rep.passed, rep.stability, cfg.inverse_tol))
        sections["inverse_energy"] = rows
    rec.results = sections


RUNNERS = {
    "modulus": run_modulus,
    "capacity": run_capacity,
    "equality": run_equality,
    "scaling": run_scaling,
    "lemma2": run_lemma2,
    "foliation": run_foliation,
    "setfn": run_setfn,
    "qverify": run_qverify,
}


def execute(cfg, deterministic: bool | None = None) -> Outcome:
    """Run one config.  Input errors propagate as :class:`GroupInputError`."""
    g = model_from_name(cfg.model)
    det = cfg.solver.deterministic if deterministic is None else deterministic
    rec = ReportRecord(command=C.to_plain(cfg), deterministic=det)
    out = Outcome(rec)
    t0 = time.perf_counter()
    RUNNERS[cfg.command](cfg, g, solve_options(cfg), out)
    rec.timing["total"] = time.perf_counter() - t0
    return out
