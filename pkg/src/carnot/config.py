"""Run configuration grammar.

A run config is a YAML mapping with a ``version`` key, a ``command`` key
selecting one of the command kinds, a ``model`` selector and
command-specific sections.  Unknown keys are rejected everywhere.  Parse
and validation failures raise :class:`ConfigError` carrying the line and
column of the offending node.

Example::

    version: 1
    command: capacity
    model: R2
    condenser: {kind: annulus, r_in: 1.0, r_out: 2.718281828459045, res: 256}
    p: 2
    expect: {value: 6.283185307179586, rel_tol: 0.03}
"""

from __future__ import annotations

from pathlib import Path
from typing import Annotated, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, field_validator

from .groups import GroupInputError, model_from_name

CONFIG_VERSION = 1

Positive = Annotated[float, Field(gt=0)]
Fraction = Annotated[float, Field(gt=0, lt=1)]
Resolution = Annotated[int, Field(ge=2, le=1024)]


class ConfigError(ValueError):
    """A config that does not parse or validate; ``line``/``column`` are 1-based."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Solver(Strict):
    tol: Annotated[float, Field(gt=0, le=0.1)] = 1e-6
    rel_tol: Annotated[float, Field(gt=0, le=0.1)] = 1e-8
    max_iter: Annotated[int, Field(ge=1, le=10_000_000)] = 100_000
    gap_tol: Annotated[float, Field(gt=0, le=0.5)] = 1e-2
    seed: Annotated[int, Field(ge=0)] = 0
    deterministic: bool = False


class Output(Strict):
    dir: str | None = None
    csv: bool = True
    grid_dump: bool = False
    svg: bool = False


class Expect(Strict):
    value: float
    rel_tol: Annotated[float, Field(gt=0, le=1)] = 0.03


# -- geometry ---------------------------------------------------------------


class VerticalFamily(Strict):
    kind: Literal["vertical"]
    width: Positive = 1.0
    height: Positive = 1.0
    count: Annotated[int, Field(ge=1, le=100_000)] = 512
    samples: Annotated[int, Field(ge=2, le=4097)] = 65


class RadialFamily(Strict):
    kind: Literal["radial"]
    r_in: Positive = 1.0
    r_out: Positive = 2.718281828459045
    count: Annotated[int, Field(ge=1, le=100_000)] = 2048
    samples: Annotated[int, Field(ge=2, le=4097)] = 129


class FiberFamily(Strict):
    kind: Literal["fibers"]
    k: Annotated[int, Field(ge=0)] = 0
    length: Positive = 1.0
    lower: tuple[float, ...] = (-0.5, -0.5)
    upper: tuple[float, ...] = (0.5, 0.5)
    per_axis: Union[Annotated[int, Field(ge=1)], tuple[Annotated[int, Field(ge=1)], ...]] = 48
    samples: Annotated[int, Field(ge=2, le=4097)] = 33


Family = Annotated[Union[VerticalFamily, RadialFamily, FiberFamily], Field(discriminator="kind")]


class AnnulusCondenser(Strict):
    kind: Literal["annulus"]
    r_in: Positive = 1.0
    r_out: Positive = 2.718281828459045
    res: Resolution = 256

    @field_validator("r_out")
    @classmethod
    def _order(cls, v, info):
        if "r_in" in info.data and not v > info.data["r_in"]:
            raise ValueError("r_out must exceed r_in")
        return v


class SlabCondenser(Strict):
    kind: Literal["slab"]
    sides: tuple[Positive, ...] = (1.0, 1.0, 1.0)
    res: Resolution = 64


class RingCondenser(Strict):
    kind: Literal["ring"]
    r_in: Positive = 0.5
    r_out: Positive = 1.0
    res: Resolution = 32

    @field_validator("r_out")
    @classmethod
    def _order(cls, v, info):
        if "r_in" in info.data and not v > info.data["r_in"]:
            raise ValueError("r_out must exceed r_in")
        return v


class MaskCondenser(Strict):
    """Two boxes as plates inside a box domain; used to exercise the invariants."""

    kind: Literal["boxes"]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    res: Resolution = 32
    f0: tuple[tuple[float, ...], tuple[float, ...]]
    f1: tuple[tuple[float, ...], tuple[float, ...]]


CondenserSpec = Annotated[
    Union[AnnulusCondenser, SlabCondenser, RingCondenser, MaskCondenser], Field(discriminator="kind")
]


class MapSpec(Strict):
    name: Literal["identity", "translation", "dilation", "rotation", "diag-stretch", "radial-power"]
    params: dict[str, Union[float, list[float]]] = {}


class BoxSpec(Strict):
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    res: Resolution = 24


# -- commands ---------------------------------------------------------------


class Base(Strict):
    version: Literal[1]
    model: str
    solver: Solver = Solver()
    output: Output = Output()
    label: str = ""

    @field_validator("model")
    @classmethod
    def _model(cls, v):
        try:
            model_from_name(v)
        except GroupInputError as exc:
            raise ValueError(str(exc)) from exc
        return v


class ModulusConfig(Base):
    command: Literal["modulus"]
    family: Family
    grid: BoxSpec | None = None
    res: Resolution | tuple[Resolution, ...] = 256
    expect: Expect | None = None


class CapacityConfig(Base):
    command: Literal["capacity"]
    condenser: CondenserSpec
    p: Annotated[float, Field(gt=1, le=20)] = 2.0
    expect: Expect | None = None
    oracle: bool = False


class EqualityConfig(Base):
    command: Literal["equality"]
    condenser: CondenserSpec
    refinements: tuple[Resolution, ...] | None = None
    gap_tol: Annotated[float, Field(gt=0, le=1)] = 0.05
    jitter: Annotated[int, Field(ge=0, le=64)] = 3


class ScalingConfig(Base):
    command: Literal["scaling"]
    condenser: CondenserSpec
    p: Annotated[float, Field(gt=1, le=20)] = 2.0
    ts: tuple[Positive, ...] = (0.5, 2.0)
    tol: Annotated[float, Field(gt=0, le=1)] = 0.03


class SegmentPairSpec(Strict):
    length: Positive = 1.0
    k: Annotated[int, Field(ge=0)] = 0
    label: str = ""


class Lemma2Config(Base):
    command: Literal["lemma2"]
    pairs: tuple[SegmentPairSpec, ...] = (SegmentPairSpec(),)
    p: Annotated[float, Field(gt=1, le=20)] = 2.0
    res: Resolution = 32
    refine: Annotated[float, Field(gt=1, le=4)] = 1.5
    c0: Positive = 0.5
    stability_tol: Annotated[float, Field(gt=0)] | None = 0.2


class FoliationConfig(Base):
    command: Literal["foliation"]
    check: Literal["hitting", "tube", "doubling"]
    k: Annotated[int, Field(ge=0)] = 0
    M: Positive = 1.0
    r: Positive = 0.1
    centers: tuple[tuple[float, ...], ...] = ()
    radii: tuple[Positive, ...] | None = None
    res: Resolution = 48
    resolutions: tuple[Resolution, ...] = (48, 96)
    base: tuple[float, ...] | None = None
    expect: Expect | None = None
    spread_tol: Annotated[float, Field(gt=0)] = 0.05
    bound: Positive = 100.0


class SetfnConfig(Base):
    command: Literal["setfn"]
    check: Literal["derivative", "lower-integral"]
    function: Literal["volume", "density", "volume-plus-square", "capped-volume"] = "density"
    points: tuple[tuple[float, ...], ...] = ()
    levels: Annotated[int, Field(ge=2, le=12)] = 6
    r0: Positive = 0.2
    ball_res: Resolution = 24
    region: BoxSpec | None = None
    tol: Annotated[float, Field(gt=0, le=1)] = 0.05
    expect_strict: bool = False


class QverifyConfig(Base):
    command: Literal["qverify"]
    checks: tuple[Literal["inequality", "change-of-variables", "acl", "inverse-energy"], ...] = (
        "inequality",
        "change-of-variables",
        "acl",
        "inverse-energy",
    )
    maps: tuple[MapSpec, ...]
    families: tuple[Family, ...] = ()
    res: Resolution = 24
    slack: Annotated[float, Field(ge=0, le=1)] = 0.05
    region: BoxSpec | None = None
    cov_tol: Annotated[float, Field(gt=0, le=1)] = 0.03
    acl_k: tuple[Annotated[int, Field(ge=0)], ...] = (0, 1)
    acl_samples: Annotated[int, Field(ge=1, le=10_000)] = 16
    acl_steps: tuple[Annotated[int, Field(ge=2)], ...] = (16, 32, 64)
    acl_tol: Annotated[float, Field(gt=0, le=1)] = 0.03
    inverse_resolutions: tuple[Resolution, ...] = (8, 16, 32)
    inverse_tol: Annotated[float, Field(gt=0, le=1)] = 0.05


RunConfig = Annotated[
    Union[
        ModulusConfig,
        CapacityConfig,
        EqualityConfig,
        ScalingConfig,
        Lemma2Config,
        FoliationConfig,
        SetfnConfig,
        QverifyConfig,
    ],
    Field(discriminator="command"),
]
COMMANDS = ("modulus", "capacity", "equality", "scaling", "lemma2", "qverify", "foliation", "setfn")
_ADAPTER = TypeAdapter(RunConfig)


def _node_at(node, loc):
    """Deepest YAML node along a pydantic error location."""
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == key), None)
            if nxt is None:
                # unknown keys point at the key itself
                nxt = next((k for k, v in node.value if k.value == key), None)
            if nxt is not None:
                # discriminator tags in the location are not keys; skip them
                node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            continue
    return node


def parse_config(text: str):
    """Parse and validate config text; raises :class:`ConfigError`."""
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ConfigError(str(exc.problem or exc), mark.line + 1, mark.column + 1) from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", 1, 1)
    if data.get("version") != CONFIG_VERSION:
        node = _node_at(root, ("version",))
        raise ConfigError(
            f"unsupported or missing version {data.get('version')!r}; expected {CONFIG_VERSION}",
            node.start_mark.line + 1,
            node.start_mark.column + 1,
        )
    try:
        return _ADAPTER.validate_python(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = err["loc"]
        if not loc and err["type"].startswith("union_tag"):
            # a bad top-level discriminator has an empty location
            loc = ("command",)
        node = _node_at(root, loc)
        path = ".".join(str(p) for p in loc)
        raise ConfigError(
            f"{path}: {err['msg']}", node.start_mark.line + 1, node.start_mark.column + 1
        ) from exc


def load_config(path):
    return parse_config(Path(path).read_text())


def to_plain(cfg) -> dict:
    """Plain-data form of a config; ``parse_config(dump_config(c)) == c``."""
    return cfg.model_dump(mode="json", exclude_defaults=False)


def dump_config(cfg) -> str:
    return yaml.safe_dump(to_plain(cfg), sort_keys=False)
