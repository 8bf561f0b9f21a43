"""Batch command line: ``carnot run <config>...`` and ``carnot emit-suite <name> <dir>``.

Exit status: 0 when every verdict passes, 1 when a verification verdict
fails (the failing verdicts are named on stderr), 2 for config parse or
input errors (with line and column when known), 3 when a solve did not
converge (a partial report is still written).
"""

from __future__ import annotations

import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click

from .config import ConfigError, load_config
from .grids import write_grid_dump
from .report import write_csv, write_heatmap_svg, write_report, write_series_svg
from .runner import EXIT_FAILED, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_OK, execute
from .suites import SUITES, emit_suite

OUT_ENV = "CARNOT_OUT"
SEVERITY = {EXIT_OK: 0, EXIT_FAILED: 1, EXIT_NOT_CONVERGED: 2, EXIT_INPUT: 3}


def write_artifacts(outcome, out_dir: Path, cfg) -> list[Path]:
    """Write report, CSV tables, grid dumps and optional SVGs for one run."""
    written = [write_report(out_dir / "report.json", outcome.record)]
    if cfg.output.csv:
        for name, (header, rows) in outcome.tables.items():
            written.append(write_csv(out_dir / f"{name}.csv", header, rows))
        for name, (x, ys) in outcome.series.items():
            rows = [[xi, *(ys[k][i] for k in ys)] for i, xi in enumerate(x)]
            written.append(write_csv(out_dir / f"{name}.csv", ["x", *ys], rows))
    if cfg.output.grid_dump:
        for name, (grid, values) in outcome.grids.items():
            path = out_dir / f"{name}.grid"
            write_grid_dump(path, grid, values)
            written.append(path)
    if cfg.output.svg:
        for name, (grid, values) in outcome.grids.items():
            written.append(write_heatmap_svg(out_dir / f"{name}.svg", grid, values, name))
        for name, (x, ys) in outcome.series.items():
            written.append(write_series_svg(out_dir / f"{name}.svg", x, ys, "radius", name, logx=True))
    return written


def run_one(path: str, out_root: str, seed: int | None, deterministic: bool) -> tuple[int, str]:
    """Run a single config file; returns ``(exit status, message)``."""
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        return EXIT_INPUT, f"{path}: {exc}"
    solver = cfg.solver.model_copy(
        update={k: v for k, v in (("seed", seed), ("deterministic", deterministic or None)) if v is not None}
    )
    cfg = cfg.model_copy(update={"solver": solver})
    try:
        outcome = execute(cfg)
    except (ValueError, NotImplementedError) as exc:
        return EXIT_INPUT, f"{path}: input error: {exc}"
    base = Path(cfg.output.dir) if cfg.output.dir else Path(out_root)
    out_dir = base / Path(path).stem
    write_artifacts(outcome, out_dir, cfg)
    status = outcome.status
    rec = outcome.record
    if status == EXIT_NOT_CONVERGED:
        return status, f"{path}: solver did not converge; partial report in {out_dir}"
    if status == EXIT_FAILED:
        return status, f"{path}: verification failed: {', '.join(rec.failing)}"
    return status, f"{path}: pass ({len(rec.verdicts)} verdicts) -> {out_dir}"


def worst_status(statuses) -> int:
    return max(statuses, key=SEVERITY.__getitem__, default=EXIT_OK)


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Carnot-group modulus, capacity and mapping-theorem verification toolkit."""


@main.command("run")
@click.argument("configs", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=click.IntRange(min=0), default=None, help="Override the config seed.")
@click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True, help="Configs run in parallel.")
@click.option("--deterministic", is_flag=True, help="Omit timing so repeated runs give identical reports.")
@click.option(
    "--out",
    type=click.Path(file_okay=False),
    default=None,
    help=f"Output root (default: ${OUT_ENV} or ./carnot-out).",
)
def run_cmd(configs, seed, threads, deterministic, out):
    """Run one or more config files."""
    out_root = out or os.environ.get(OUT_ENV) or "carnot-out"
    jobs = [(str(c), out_root, seed, deterministic) for c in configs]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_one, *zip(*jobs)))
    else:
        results = [run_one(*j) for j in jobs]
    for status, msg in results:
        click.echo(msg, err=status != EXIT_OK)
    sys.exit(worst_status(s for s, _ in results))


@main.command("emit-suite")
@click.argument("name")
@click.argument("out_dir", type=click.Path(file_okay=False))
def emit_cmd(name, out_dir):
    """Write the config files of a named suite."""
    if name not in SUITES:
        click.echo(f"unknown suite {name!r}; choose from {', '.join(SUITES)}", err=True)
        sys.exit(EXIT_INPUT)
    for p in emit_suite(name, out_dir):
        click.echo(str(p))


if __name__ == "__main__":  # pragma: no cover
    main()
