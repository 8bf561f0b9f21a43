"""Sampled horizontal curves, their lengths and line integrals.

Curve families serialize as JSON lines, one curve per line::

    {"t": [...], "points": [[...], ...], "tangents": [[...], ...] | null}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .groups import GroupInputError, GroupModel


@dataclass
class HorizontalCurve:
    """Samples ``t_0 < ... < t_N`` of a horizontal curve.

    ``tangents[j]`` holds the first-layer frame coefficients ``a(t_j)`` with
    ``gamma'(t_j) = sum_i a_i(t_j) X_i(gamma(t_j))``.
    """

    model: GroupModel
    t: np.ndarray
    points: np.ndarray
    tangents: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, float)
        self.points = self.model.check(np.asarray(self.points, float))
        if self.t.ndim != 1 or len(self.t) < 2:
            raise GroupInputError("a curve needs at least two parameter samples")
        if np.any(np.diff(self.t) <= 0):
            raise GroupInputError("curve parameters must be strictly increasing")
        if self.points.shape != (len(self.t), self.model.dim):
            raise GroupInputError("points must have one row per parameter sample")
        if self.tangents is not None:
            self.tangents = np.asarray(self.tangents, float)
            if self.tangents.shape != (len(self.t), self.model.n1):
                raise GroupInputError("tangents must have one row of n1 coefficients per sample")

    def __len__(self):
        return len(self.t)

    def increments(self) -> np.ndarray:
        """Group-intrinsic differences gamma(t_j)^-1 gamma(t_{j+1})."""
        g = self.model
        return g.multiply(g.inverse(self.points[:-1]), self.points[1:])

    def consistency_residual(self) -> float:
        """Max deviation of first-layer increments from a(t_j) dt, scaled by dt^2."""
        if self.tangents is None:
            raise GroupInputError("curve has no tangents")
        dt = np.diff(self.t)
        inc = self.model.first_layer(self.increments())
        pred = 0.5 * (self.tangents[:-1] + self.tangents[1:]) * dt[:, None]
        return float(np.max(np.linalg.norm(inc - pred, axis=1) / dt**2))

    def speed(self) -> np.ndarray:
        if self.tangents is None:
            raise GroupInputError("curve has no tangents; use polygonal_length")
        return np.linalg.norm(self.tangents, axis=1)

    def to_record(self) -> dict:
        return {
            "t": self.t.tolist(),
            "points": self.points.tolist(),
            "tangents": None if self.tangents is None else self.tangents.tolist(),
        }


@dataclass
class CurveFamily:
    model: GroupModel
    curves: list[HorizontalCurve]
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.curves:
            raise GroupInputError("a curve family must be nonempty")
        for c in self.curves:
            if c.model != self.model:
                raise GroupInputError("all curves of a family must share one model")

    def __len__(self):
        return len(self.curves)

    def __iter__(self):
        return iter(self.curves)

    def subfamily(self, idx) -> "CurveFamily":
        return CurveFamily(self.model, [self.curves[i] for i in idx], dict(self.descriptor))


def write_family(path, family: CurveFamily) -> None:
    with open(path, "w") as fh:
        for c in family:
            fh.write(json.dumps(c.to_record()) + "\n")


def read_family(path, model: GroupModel) -> CurveFamily:
    curves = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                curves.append(
                    HorizontalCurve(model, rec["t"], rec["points"], rec.get("tangents"))
                )
    return CurveFamily(model, curves, {"source": str(path)})


def horizontal_length(curve: HorizontalCurve) -> float:
    """Trapezoidal integral of the horizontal speed |a(t)|."""
    return float(np.trapezoid(curve.speed(), curve.t))


def polygonal_length(curve: HorizontalCurve) -> float:
    """Sum of gauge lengths of the intrinsic chords."""
    return float(np.sum(curve.model.gauge(curve.increments())))


def line_integral(rho, curve: HorizontalCurve) -> float:
    """Integral of ``rho`` along the curve with respect to horizontal arc length."""
    values = np.asarray(rho(curve.points), float)
    if np.any(values < 0):
        raise GroupInputError("densities must be nonnegative along the curve")
    return float(np.trapezoid(values * curve.speed(), curve.t))


def segment_curve(model: GroupModel, start, velocity, t0: float, t1: float, samples: int = 33):
    """Curve ``t -> start * exp(t v)`` for ``t`` in ``[t0, t1]`` with tangents ``v``."""
    start = model.check(start)
    v = np.asarray(velocity, float)
    t = np.linspace(t0, t1, samples)
    pts = model.multiply(start, model.exp_horizontal(t[:, None] * v))
    return HorizontalCurve(model, t, pts, np.tile(v, (samples, 1)))


# Carnot-Caratheodory distance upper bound


def _path_end(g: GroupModel, segs: np.ndarray) -> np.ndarray:
    end = g.identity()
    for v in segs:
        end = g.multiply(end, g.exp_horizontal(v))
    return end


def _closing_length(g: GroupModel, residual: np.ndarray) -> float:
    """Length of an explicit horizontal path from e to ``residual``.

    A straight segment fixes the first layer; a square commutator loop of
    side a then adds -+4a^2 to the center.
    """
    h = np.linalg.norm(g.first_layer(residual))
    if g.is_abelian:
        return float(h)
    return float(h + 2.0 * np.sqrt(abs(residual[-1])))


@dataclass
class DistanceEstimate:
    length: float
    segments: np.ndarray
    closing: float


def cc_distance_upper(
    g: GroupModel, p, q, budget: int = 4, segments: int = 8, seed: int = 0
) -> DistanceEstimate:
    """Length of a short piecewise-horizontal path from ``p`` to ``q``.

    ``budget`` random restarts of a constrained minimization over
    ``segments`` straight horizontal pieces; whatever endpoint error remains
    is closed exactly by an explicit segment-plus-loop path, so the result
    is always the length of a genuine horizontal path, hence an upper bound
    on d(p, q).  The abelian model returns the Euclidean distance.
    """
    if budget < 1:
        raise GroupInputError("budget must be >= 1")
    target = g.multiply(g.inverse(g.check(p)), g.check(q))
    if g.is_abelian:
        d = float(np.linalg.norm(target))
        return DistanceEstimate(d, target[None, :], 0.0)
    n1 = g.n1
    rng = np.random.default_rng(seed)

    def total(flat):
        segs = flat.reshape(segments, n1)
        return np.sum(np.sqrt(np.sum(segs * segs, axis=1) + 1e-18))

    def gap(flat):
        return _path_end(g, flat.reshape(segments, n1)) - target

    scale = max(g.gauge(target), 1e-12)
    best = None
    for attempt in range(budget):
        if attempt == 0:
            # regular polygon loop around the first-layer chord
            ang = 2 * np.pi * (np.arange(segments) + 0.5) / segments
            base = np.zeros((segments, n1))
            base[:, 0] = np.cos(ang)
            base[:, g.n] = np.sin(ang)
            x0 = (0.3 * scale * base + g.first_layer(target) / segments).ravel()
        else:
            x0 = rng.standard_normal(segments * n1) * scale / np.sqrt(segments)
        res = optimize.minimize(
            total,
            x0,
            method="SLSQP",
            constraints=[{"type": "eq", "fun": gap}],
            options={"maxiter": 400, "ftol": 1e-12},
        )
        segs = res.x.reshape(segments, n1)
        residual = g.multiply(g.inverse(_path_end(g, segs)), target)
        closing = _closing_length(g, residual)
        length = float(np.sum(np.linalg.norm(segs, axis=1)) + closing)
        if best is None or length < best.length:
            best = DistanceEstimate(length, segs, closing)
    direct = _closing_length(g, target)
    if direct < best.length:
        best = DistanceEstimate(direct, np.zeros((0, n1)), direct)
    return best
