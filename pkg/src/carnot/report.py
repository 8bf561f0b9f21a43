"""Structured report records and plain-text output writers."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA = "carnot-report/1"


@dataclass
class Verdict:
    name: str
    passed: bool
    value: float | None = None
    tol: float | None = None
    detail: str = ""

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "value": self.value,
            "tol": self.tol,
            "detail": self.detail,
        }


@dataclass
class ReportRecord:
    """Everything a run produced, in a JSON-serializable form.

    ``timing`` is dropped from :meth:`to_json` in deterministic mode so
    that repeated runs give byte-identical files.
    """

    command: dict
    results: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    converged: bool = True
    timing: dict = field(default_factory=dict)
    deterministic: bool = False

    @property
    def digest(self) -> str:
        return inputs_digest(self.command)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    @property
    def failing(self) -> list[str]:
        return [v.name for v in self.verdicts if not v.passed]

    def to_dict(self) -> dict:
        out = {
            "schema": SCHEMA,
            "command": self.command,
            "inputs_digest": self.digest,
            "results": self.results,
            "residuals": self.residuals,
            "verdicts": [v.to_record() for v in self.verdicts],
            "converged": self.converged,
            "passed": self.passed,
        }
        if not self.deterministic:
            out["timing"] = self.timing
        return jsonable(out)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"


def jsonable(obj):
    """Recursively convert numpy scalars and arrays to plain Python values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def inputs_digest(command: dict) -> str:
    canon = json.dumps(jsonable(command), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_report(path, record: ReportRecord) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(record.to_json())
    return path


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_heatmap_svg(path, grid, values, title: str = "") -> Path:
    """Static SVG of a 2D grid field (middle slice for 3D).  Needs matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    v = np.asarray(values, float).reshape(grid.shape)
    lo, hi = grid.lower, grid.upper
    if v.ndim == 3:
        v = v[:, :, v.shape[2] // 2]
    fig, ax = plt.subplots(figsize=(4, 4))
    im = ax.imshow(v.T, origin="lower", extent=(lo[0], hi[0], lo[1], hi[1]), aspect="auto")
    fig.colorbar(im, ax=ax)
    ax.set_title(title)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def write_series_svg(path, x, ys: dict, xlabel: str = "", ylabel: str = "", logx: bool = False) -> Path:
    """Static SVG line plot of one or more series.  Needs matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, y in ys.items():
        ax.plot(x, y, marker="o", label=name)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
