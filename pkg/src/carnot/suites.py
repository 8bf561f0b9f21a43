"""Ready-to-run config manifests for the acceptance suites."""

from __future__ import annotations

import math
from pathlib import Path

import yaml

from .config import parse_config

E = math.e

H1_CATALOG = [
    {"name": "translation", "params": {"by": [0.3, -0.2, 0.1]}},
    {"name": "dilation", "params": {"t": 0.7}},
    {"name": "rotation", "params": {"theta": 0.4}},
    {"name": "diag-stretch", "params": {"a": 2.0, "b": 1.0}},
]
R2_CATALOG = [
    {"name": "translation", "params": {"by": [0.3, -0.2]}},
    {"name": "dilation", "params": {"t": 0.7}},
    {"name": "rotation", "params": {"theta": 0.4}},
    {"name": "diag-stretch", "params": {"a": 2.0, "b": 1.0}},
    {"name": "radial-power", "params": {"alpha": 2.0}},
    {"name": "radial-power", "params": {"alpha": 0.5}},
]


def _cfg(command: str, model: str, **body) -> dict:
    return {"version": 1, "command": command, "model": model, **body}


SUITES: dict[str, dict[str, dict]] = {
    "euclid-oracles": {
        "rectangle-modulus": _cfg(
            "modulus", "R2", family={"kind": "vertical", "width": 2.0, "height": 1.0, "count": 1024}, res=256
        ),
        "annulus-modulus": _cfg(
            "modulus", "R2", family={"kind": "radial", "r_in": 1.0, "r_out": E, "count": 2048}, res=256
        ),
        "annulus-capacity": _cfg(
            "capacity", "R2", condenser={"kind": "annulus", "r_in": 1.0, "r_out": E, "res": 256}, p=2.0
        ),
        "cube-capacity": _cfg(
            "capacity", "R3", condenser={"kind": "slab", "sides": [1.0, 1.0, 1.0], "res": 64}, p=2.0
        ),
        "cube-scaling": _cfg(
            "scaling", "R3", condenser={"kind": "slab", "sides": [1.0, 1.0, 1.0], "res": 32}, p=2.0, ts=[0.5, 2.0]
        ),
        "annulus-equality": _cfg(
            "equality", "R2", condenser={"kind": "annulus", "r_in": 1.0, "r_out": E, "res": 256}
        ),
    },
    "heisenberg-smoke": {
        "ring-capacity": _cfg(
            "capacity", "H1", condenser={"kind": "ring", "r_in": 0.5, "r_out": 1.0, "res": 24}, p=4.0, oracle=True
        ),
        "ring-scaling": _cfg(
            "scaling", "H1", condenser={"kind": "ring", "r_in": 0.5, "r_out": 1.0, "res": 16}, p=4.0, tol=0.03
        ),
        "ring-equality": _cfg(
            "equality", "H1", condenser={"kind": "ring", "r_in": 0.5, "r_out": 1.0, "res": 16}, refinements=[16, 24]
        ),
        "hitting": _cfg("foliation", "H1", check="hitting", res=24),
        "qverify": _cfg(
            "qverify",
            "H1",
            maps=H1_CATALOG[:2],
            families=[{"kind": "fibers", "k": 0, "per_axis": 32}],
            res=16,
            inverse_resolutions=[8, 16],
        ),
    },
    "paper-theorems": {
        "qverify-h1": _cfg("qverify", "H1", maps=H1_CATALOG, res=24),
        "qverify-r2": _cfg("qverify", "R2", maps=R2_CATALOG, res=64, inverse_resolutions=[32, 64, 128]),
        "hitting-r2": _cfg("foliation", "R2", check="hitting"),
        "hitting-h1": _cfg("foliation", "H1", check="hitting"),
        "doubling-h1": _cfg("foliation", "H1", check="doubling", centers=[[0.237, 0.113, 0.0]], radii=[0.1]),
        "tube-r2": _cfg("foliation", "R2", check="tube"),
        "tube-h1": _cfg("foliation", "H1", check="tube", base=[0.0, 0.3, 0.2]),
        "setfn-derivative": _cfg(
            "setfn", "H1", check="derivative", points=[[0.0, 0.0, 0.0], [0.4, -0.3, 0.2], [-0.7, 0.1, -0.5]]
        ),
        "setfn-equality": _cfg("setfn", "R2", check="lower-integral", function="density"),
        "setfn-strict": _cfg(
            "setfn", "R2", check="lower-integral", function="volume-plus-square", expect_strict=True
        ),
        "ring-equality": _cfg(
            "equality", "H1", condenser={"kind": "ring", "r_in": 0.5, "r_out": 1.0, "res": 24}, refinements=[24, 32, 48]
        ),
        "ring-scaling": _cfg(
            "scaling", "H1", condenser={"kind": "ring", "r_in": 0.5, "r_out": 1.0, "res": 24}, p=4.0, tol=0.03
        ),
        "lemma2-r2": _cfg(
            "lemma2",
            "R2",
            pairs=[{"length": 1.0, "k": 0}, {"length": 0.5, "k": 1}, {"length": 2.0, "k": 0}],
            res=32,
        ),
        "lemma2-h1": _cfg("lemma2", "H1", pairs=[{"length": 1.0, "k": 0}], p=4.0, res=24, stability_tol=None),
    },
}


def emit_suite(name: str, out_dir) -> list[Path]:
    """Write the configs of suite ``name`` to ``out_dir``; unknown names raise KeyError."""
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, (key, body) in enumerate(SUITES[name].items(), 1):
        text = yaml.safe_dump(body, sort_keys=False)
        parse_config(text)  # manifests must satisfy the grammar
        path = out / f"{i:02d}-{key}.yaml"
        path.write_text(f"# {name}: {key}\n" + text)
        paths.append(path)
    return paths
