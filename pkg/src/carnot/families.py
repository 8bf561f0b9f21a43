"""Generators for the standard test families of curves."""

from __future__ import annotations

import numpy as np

from .curves import CurveFamily, HorizontalCurve, segment_curve
from .groups import GroupInputError, GroupModel


def vertical_segments(
    g: GroupModel, width: float, height: float, count: int, samples: int = 65
) -> CurveFamily:
    """Segments ``{x = const, 0 <= y <= height}`` with ``x`` uniform in ``(0, width)``."""
    if not g.is_abelian or g.dim != 2:
        raise GroupInputError("vertical segment families live in the plane")
    if count < 1 or width <= 0 or height <= 0:
        raise GroupInputError("count, width and height must be positive")
    xs = (np.arange(count) + 0.5) / count * width
    curves = [
        segment_curve(g, [x, 0.0], [0.0, 1.0], 0.0, height, samples) for x in xs
    ]
    return CurveFamily(
        g, curves, {"kind": "vertical", "width": width, "height": height, "count": count}
    )


def radial_segments(
    g: GroupModel, r_in: float, r_out: float, count: int, samples: int = 129
) -> CurveFamily:
    """Rays ``theta = const`` of the plane annulus ``r_in <= |x| <= r_out``."""
    if not g.is_abelian or g.dim != 2:
        raise GroupInputError("radial families live in the plane")
    if not 0 < r_in < r_out:
        raise GroupInputError("need 0 < r_in < r_out")
    th = 2 * np.pi * (np.arange(count) + 0.5) / count
    curves = []
    for a in th:
        u = np.array([np.cos(a), np.sin(a)])
        curves.append(segment_curve(g, r_in * u, u, 0.0, r_out - r_in, samples))
    return CurveFamily(
        g, curves, {"kind": "radial", "r_in": r_in, "r_out": r_out, "count": count}
    )


def fiber_family(
    g: GroupModel,
    k: int,
    length: float,
    transversal_lower,
    transversal_upper,
    per_axis,
    samples: int = 65,
    direction=None,
) -> CurveFamily:
    """Horizontal lines ``s exp(t v)``, ``t`` in ``[0, length]``.

    Base points ``s`` form a uniform lattice on the box of the hyperplane
    ``{x_k = 0}`` with ``per_axis`` points per coordinate (an int, or one
    count per transversal coordinate); ``v`` is ``e_k`` unless a
    first-layer ``direction`` is given.
    """
    lo = np.asarray(transversal_lower, float)
    hi = np.asarray(transversal_upper, float)
    if lo.shape != (g.dim - 1,) or hi.shape != lo.shape:
        raise GroupInputError("transversal box needs dim - 1 bounds")
    v = np.zeros(g.n1)
    v[k] = 1.0
    if direction is not None:
        v = np.asarray(direction, float)
        v = v / np.linalg.norm(v)
    counts = np.broadcast_to(np.asarray(per_axis, int), lo.shape)
    if np.any(counts < 1):
        raise GroupInputError("per_axis counts must be positive")
    axes = [lo[j] + (np.arange(n) + 0.5) / n * (hi[j] - lo[j]) for j, n in enumerate(counts)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(lo))
    base = np.insert(mesh, k, 0.0, axis=1)
    curves = [segment_curve(g, s, v, 0.0, length, samples) for s in base]
    return CurveFamily(
        g,
        curves,
        {"kind": "fibers", "k": k, "length": length, "count": len(curves), "direction": v.tolist()},
    )


def family_points(family: CurveFamily) -> np.ndarray:
    return np.concatenate([c.points for c in family])


def bounding_box(family: CurveFamily, pad: float = 0.02):
    pts = family_points(family)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    return lo - pad * span, hi + pad * span


def curve_from_points(g: GroupModel, t, points) -> HorizontalCurve:
    """Curve with tangents from centered intrinsic first differences."""
    t = np.asarray(t, float)
    points = g.check(np.asarray(points, float))
    inc = g.first_layer(g.multiply(g.inverse(points[:-1]), points[1:]))
    seg = inc / np.diff(t)[:, None]
    tan = np.concatenate([seg[:1], 0.5 * (seg[:-1] + seg[1:]), seg[-1:]])
    return HorizontalCurve(g, t, points, tan)
