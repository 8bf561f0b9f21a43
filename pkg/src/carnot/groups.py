"""Concrete Carnot groups in exponential coordinates.

Two models are implemented: the abelian group R^n and the Heisenberg
group H^n with coordinates ``(x_1..x_n, y_1..y_n, z)`` and law

    (x, y, z)(x', y', z') = (x + x', y + y', z + z' - 2<x, y'> + 2<y, x'>).

Points are plain numpy arrays whose last axis holds the coordinates, so
every operation broadcasts over leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

ABELIAN = "abelian"
HEISENBERG = "heisenberg"

_BALL_MC_SAMPLES = 1_000_000
_BALL_MC_SEED = 20_240_917
_TRIANGLE_CHUNK = 4096


class GroupInputError(ValueError):
    """Raised for points or parameters that do not fit the group model."""


@dataclass(frozen=True)
class BallVolume:
    """Coordinate volume of the unit gauge ball with its Monte-Carlo error."""

    value: float
    stderr: float
    samples: int


@dataclass(frozen=True)
class GroupModel:
    """A Carnot group of step at most two.

    Parameters
    ----------
    kind : {"abelian", "heisenberg"}
        Model family.
    n : int
        ``R^n`` for the abelian model, ``H^n`` for the Heisenberg model.
    """

    kind: str
    n: int
    layers: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if self.kind == ABELIAN:
            if self.n < 2:
                raise GroupInputError("abelian model needs n >= 2")
            layers = (self.n,)
        elif self.kind == HEISENBERG:
            if self.n < 1:
                raise GroupInputError("Heisenberg model needs n >= 1")
            layers = (2 * self.n, 1)
        else:
            raise GroupInputError(f"unknown model kind {self.kind!r}")
        object.__setattr__(self, "layers", layers)

    def __repr__(self):
        return f"{'R' if self.kind == ABELIAN else 'H'}^{self.n}"

    @property
    def name(self) -> str:
        """Selector accepted by :func:`model_from_name`, e.g. ``"H1"``."""
        return f"{'R' if self.kind == ABELIAN else 'H'}{self.n}"

    @property
    def dim(self) -> int:
        """Topological dimension N = sum of layer dimensions."""
        return sum(self.layers)

    @property
    def n1(self) -> int:
        return self.layers[0]

    @property
    def nu(self) -> int:
        """Homogeneous dimension, sum of i * n_i."""
        return sum((i + 1) * d for i, d in enumerate(self.layers))

    @property
    def weights(self) -> np.ndarray:
        """Dilation weight of each coordinate."""
        return np.concatenate(
            [np.full(d, i + 1.0) for i, d in enumerate(self.layers)]
        )

    @property
    def is_abelian(self) -> bool:
        return self.kind == ABELIAN

    def identity(self) -> np.ndarray:
        return np.zeros(self.dim)

    def check(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.ndim == 0 or p.shape[-1] != self.dim:
            raise GroupInputError(
                f"{self!r} points need {self.dim} coordinates, got shape {p.shape}"
            )
        return p

    # group structure

    def multiply(self, p, q) -> np.ndarray:
        p, q = self.check(p), self.check(q)
        out = p + q
        if self.kind == HEISENBERG:
            n = self.n
            x, y = p[..., :n], p[..., n : 2 * n]
            xq, yq = q[..., :n], q[..., n : 2 * n]
            out[..., -1] += 2.0 * (
                np.sum(y * xq, axis=-1) - np.sum(x * yq, axis=-1)
            )
        return out

    def inverse(self, p) -> np.ndarray:
        # both laws have (exp v)^-1 = exp(-v) in exponential coordinates
        return -self.check(p)

    def dilate(self, t: float, p) -> np.ndarray:
        if not t > 0:
            raise GroupInputError(f"dilation factor must be positive, got {t}")
        return self.check(p) * t ** self.weights

    def exp_horizontal(self, v) -> np.ndarray:
        """Exponential of a first-layer vector (coordinates of exp(sum v_i X_i))."""
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape[:-1] + (self.dim,))
        out[..., : self.n1] = v
        return out

    def first_layer(self, p) -> np.ndarray:
        return self.check(p)[..., : self.n1]

    def symplectic_form(self, a, b) -> np.ndarray:
        """Center component of the bracket pairing on V_1.

        ``[sum a_i X_i, sum b_j X_j] = -4 * omega(a, b) * Z`` on H^n, where
        ``omega(a, b) = <a_x, b_y> - <a_y, b_x>``.
        """
        if self.kind != HEISENBERG:
            raise GroupInputError("symplectic form only exists on H^n")
        n = self.n
        a, b = np.asarray(a, float), np.asarray(b, float)
        return np.sum(a[..., :n] * b[..., n:], axis=-1) - np.sum(
            a[..., n:] * b[..., :n], axis=-1
        )

    # gauge and quasimetric

    def gauge(self, p) -> np.ndarray:
        """Homogeneous norm: Euclidean on R^n, Koranyi gauge on H^n."""
        p = self.check(p)
        # evaluate on the point dilated to unit size: squares of tiny or huge
        # coordinates would underflow to 0 or overflow, breaking |p| = 0 iff p = e
        if self.kind == ABELIAN:
            s = np.max(np.abs(p), axis=-1)
        else:
            s = np.maximum(np.max(np.abs(p[..., :-1]), axis=-1), np.sqrt(np.abs(p[..., -1])))
        s = np.where(s > 0, s, 1.0)
        u = p / s[..., None]
        if self.kind != ABELIAN:
            # divide twice rather than by s**2, which can underflow itself
            u[..., -1] /= s
        if self.kind == ABELIAN:
            return s * np.sqrt(np.sum(u * u, axis=-1))
        h2 = np.sum(u[..., :-1] ** 2, axis=-1)
        return s * (h2 * h2 + u[..., -1] ** 2) ** 0.25

    def quasimetric(self, p, q) -> np.ndarray:
        """rho(p, q) = |q^-1 p|."""
        return self.gauge(self.multiply(self.inverse(q), p))

    def random_points(self, rng: np.random.Generator, size: int, scale: float = 1.0):
        """Standard Gaussian coordinates, dilated by ``scale``."""
        return self.dilate(scale, rng.standard_normal((size, self.dim)))

    def estimate_triangle_constant(self, sample_count: int, seed: int = 0) -> float:
        """Empirical max of |pq| / (|p| + |q|) over random pairs.

        Samples are drawn in fixed-size chunks from one generator so a longer
        run always extends the shorter run's sample stream; the estimate is
        therefore nondecreasing in ``sample_count`` for a fixed seed.  One in
        eight pairs is a collinear horizontal pair, where the ratio is 1.
        """
        if sample_count < 1:
            raise GroupInputError("sample_count must be >= 1")
        rng = np.random.default_rng(seed)
        best = 0.0
        done = 0
        while done < sample_count:
            m = min(_TRIANGLE_CHUNK, sample_count - done)
            p = rng.standard_normal((_TRIANGLE_CHUNK, self.dim))
            q = rng.standard_normal((_TRIANGLE_CHUNK, self.dim))
            scale = np.exp(2.0 * rng.standard_normal(_TRIANGLE_CHUNK))
            q = q * scale[:, None] ** self.weights
            u = rng.standard_normal((_TRIANGLE_CHUNK, self.n1))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            s = rng.uniform(0.0, 1.0, (_TRIANGLE_CHUNK, 2)) * 2.0 + 1e-3
            collinear = rng.uniform(size=_TRIANGLE_CHUNK) < 0.125
            p[collinear] = self.exp_horizontal(u[collinear] * s[collinear, :1])
            q[collinear] = self.exp_horizontal(u[collinear] * s[collinear, 1:])
            p, q = p[:m], q[:m]
            ratio = self.gauge(self.multiply(p, q)) / (self.gauge(p) + self.gauge(q))
            best = max(best, float(np.max(ratio)))
            done += m
        return best

    # Haar measure

    @cached_property
    def unit_ball(self) -> BallVolume:
        """Volume of the gauge ball B(e, 1)."""
        if self.kind == ABELIAN:
            v = math.pi ** (self.n / 2) / math.gamma(self.n / 2 + 1)
            return BallVolume(v, 0.0, 0)
        rng = np.random.default_rng(_BALL_MC_SEED)
        hits = 0
        chunk = 200_000
        for start in range(0, _BALL_MC_SAMPLES, chunk):
            u = rng.uniform(-1.0, 1.0, (min(chunk, _BALL_MC_SAMPLES - start), self.dim))
            hits += int(np.count_nonzero(self.gauge(u) < 1.0))
        box = 2.0 ** self.dim
        frac = hits / _BALL_MC_SAMPLES
        stderr = box * math.sqrt(frac * (1 - frac) / _BALL_MC_SAMPLES)
        return BallVolume(box * frac, stderr, _BALL_MC_SAMPLES)

    def ball_volume(self, r: float) -> float:
        """|B(x, r)| = r^nu |B(e, 1)| for any center x."""
        if not r > 0:
            raise GroupInputError(f"radius must be positive, got {r}")
        return r ** self.nu * self.unit_ball.value


def abelian(n: int = 2) -> GroupModel:
    return GroupModel(ABELIAN, n)


def heisenberg(n: int = 1) -> GroupModel:
    return GroupModel(HEISENBERG, n)


def model_from_name(name: str) -> GroupModel:
    """Parse ``"R2"``, ``"R3"``, ``"H1"`` style selectors."""
    name = name.strip().upper()
    if len(name) >= 2 and name[0] in "RH" and name[1:].isdigit():
        return (abelian if name[0] == "R" else heisenberg)(int(name[1:]))
    raise GroupInputError(f"unknown model selector {name!r}")
