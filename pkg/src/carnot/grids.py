"""Axis-aligned cell grids in exponential coordinates, and their text dumps.

A grid is a box split into ``shape`` equal cells.  Haar measure is the
coordinate Lebesgue measure, so every cell carries the same volume.

Grid dump format (plain text)::

    # grid dims=NX,NY[,NZ] lower=a,b[,c] upper=A,B[,C]
    v000 v001 ...            (one line per leading index, row-major body)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        shape = tuple(int(v) for v in self.shape)
        if not (len(lo) == len(hi) == len(shape)):
            raise ValueError("lower, upper and shape must have equal length")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("grid box is degenerate")
        if any(s < 1 for s in shape):
            raise ValueError("grid resolution must be >= 1 per axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def cube(cls, lower, upper, res: int) -> "Grid":
        lower = np.atleast_1d(np.asarray(lower, float))
        upper = np.atleast_1d(np.asarray(upper, float))
        return cls(tuple(lower), tuple(upper), (res,) * len(lower))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / np.array(self.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        h = self.spacing
        return [
            self.lower[d] + (np.arange(self.shape[d]) + 0.5) * h[d]
            for d in range(self.ndim)
        ]

    def centers(self) -> np.ndarray:
        """Cell centers, shape ``(*shape, ndim)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def flat_centers(self) -> np.ndarray:
        return self.centers().reshape(-1, self.ndim)

    def locate(self, pts) -> np.ndarray:
        """Flat index of the cell containing each point, -1 outside the box."""
        pts = np.asarray(pts, float)
        rel = (pts - np.array(self.lower)) / self.spacing
        idx = np.floor(rel).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < np.array(self.shape)), axis=-1)
        idx = np.clip(idx, 0, np.array(self.shape) - 1)
        flat = np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), self.shape)
        return np.where(inside, flat, -1)

    def contains(self, pts) -> np.ndarray:
        pts = np.asarray(pts, float)
        return np.all(
            (pts >= np.array(self.lower)) & (pts <= np.array(self.upper)), axis=-1
        )

    def mask(self, predicate) -> np.ndarray:
        """Boolean cell mask: a cell belongs to a region iff its center does."""
        return np.asarray(predicate(self.flat_centers()), bool).reshape(self.shape)

    def mask_from_points(self, pts) -> np.ndarray:
        """Cells containing at least one of the sample points."""
        m = np.zeros(self.size, bool)
        idx = self.locate(pts)
        m[idx[idx >= 0]] = True
        return m.reshape(self.shape)

    def scaled(self, factors) -> "Grid":
        """The grid transported by a coordinatewise scaling (same resolution)."""
        f = np.asarray(factors, float)
        lo = np.array(self.lower) * f
        hi = np.array(self.upper) * f
        return Grid(tuple(np.minimum(lo, hi)), tuple(np.maximum(lo, hi)), self.shape)

    def refined(self, factor: float) -> "Grid":
        return Grid(
            self.lower,
            self.upper,
            tuple(max(1, int(round(s * factor))) for s in self.shape),
        )

    def header(self) -> str:
        fmt = lambda xs: ",".join(repr(float(x)) for x in xs)  # noqa: E731
        dims = ",".join(str(s) for s in self.shape)
        return f"# grid dims={dims} lower={fmt(self.lower)} upper={fmt(self.upper)}"


def write_grid_dump(path, grid: Grid, values) -> None:
    values = np.asarray(values, float).reshape(grid.shape)
    rows = values.reshape(grid.shape[0], -1)
    with open(path, "w") as fh:
        fh.write(grid.header() + "\n")
        for row in rows:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_grid_dump(path) -> tuple[Grid, np.ndarray]:
    with open(path) as fh:
        head = fh.readline().strip()
        if not head.startswith("# grid "):
            raise ValueError(f"{path}: missing grid header")
        fields = dict(item.split("=", 1) for item in head[len("# grid ") :].split())
        shape = tuple(int(v) for v in fields["dims"].split(","))
        lower = tuple(float(v) for v in fields["lower"].split(","))
        upper = tuple(float(v) for v in fields["upper"].split(","))
        body = np.array(
            [[float(v) for v in line.split()] for line in fh if line.strip()]
        )
    grid = Grid(lower, upper, shape)
    return grid, body.reshape(shape)
