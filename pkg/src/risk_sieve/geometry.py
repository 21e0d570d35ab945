"""Polyline paths parametrized by arc length.

Paths are piecewise linear. All distance queries are computed segment pair by
segment pair in closed form, so a path with ``p`` vertices costs ``O(p^2)``
per query regardless of how long the segments are.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

TOL = 1e-9


class Point2(NamedTuple):
    x: float
    y: float


class PolylinePath:
    """Immutable 2D polyline with cumulative arc length per vertex.

    A path with a single vertex is the degenerate "point path" returned by
    :func:`cut_path` for a zero horizon; distance queries treat it as a point.
    """

    __slots__ = ("vertices", "cumlen")

    def __init__(self, vertices):
        v = np.array(vertices, dtype=np.float64).reshape(-1, 2)
        if v.shape[0] < 1:
            raise ValueError("path needs at least one vertex")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite coordinate in path")
        seg = np.hypot(np.diff(v[:, 0]), np.diff(v[:, 1]))
        if np.any(seg <= TOL):
            raise ValueError("consecutive path vertices must be distinct")
        cum = np.zeros(v.shape[0])
        np.cumsum(seg, out=cum[1:])
        v.setflags(write=False)
        cum.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "cumlen", cum)

    def __setattr__(self, name, value):
        raise AttributeError("PolylinePath is immutable")

    def __reduce__(self):
        return (PolylinePath, (np.array(self.vertices),))

    @classmethod
    def point(cls, p) -> PolylinePath:
        return cls([p])

    @property
    def length(self) -> float:
        return float(self.cumlen[-1])

    @property
    def is_point(self) -> bool:
        return self.vertices.shape[0] == 1

    @property
    def start(self) -> Point2:
        return Point2(float(self.vertices[0, 0]), float(self.vertices[0, 1]))

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolylinePath):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices)

    def __hash__(self) -> int:
        return hash(self.vertices.tobytes())

    def __repr__(self) -> str:
        return f"PolylinePath({self.vertices.tolist()!r})"

    def tolist(self) -> list[list[float]]:
        return self.vertices.tolist()


@dataclass(frozen=True)
class Crossing:
    point: Point2
    arclen_ego: float
    arclen_other: float


# ---------------------------------------------------------------------------
# compiled kernels; they operate on raw (P, 2) vertex and (P,) arc length arrays
# ---------------------------------------------------------------------------


@njit(cache=True)
def _point_at(v, cum, m):
    n = v.shape[0]
    if n == 1 or m <= 0.0:
        return v[0, 0], v[0, 1]
    if m >= cum[n - 1]:
        return v[n - 1, 0], v[n - 1, 1]
    i = np.searchsorted(cum, m, side="right") - 1
    t = (m - cum[i]) / (cum[i + 1] - cum[i])
    return v[i, 0] + t * (v[i + 1, 0] - v[i, 0]), v[i, 1] + t * (v[i + 1, 1] - v[i, 1])


@njit(cache=True)
def _sample_path(v, cum, arclens, out, extrapolate=False):
    """Positions at a sequence of arc lengths.

    Arc lengths outside ``[0, length]`` clamp to the path ends, or with
    ``extrapolate`` continue straight along the first/last segment.
    The segment search resumes from the previous hit, so slowly varying
    sequences cost O(1) amortized per sample.
    """
    n = v.shape[0]
    total = cum[n - 1]
    i = 0
    for k in range(arclens.shape[0]):
        m = arclens[k]
        if n == 1:
            out[k, 0] = v[0, 0]
            out[k, 1] = v[0, 1]
        elif m <= 0.0:
            t = m / cum[1] if extrapolate else 0.0
            out[k, 0] = v[0, 0] + t * (v[1, 0] - v[0, 0])
            out[k, 1] = v[0, 1] + t * (v[1, 1] - v[0, 1])
        elif m >= total:
            t = (m - total) / (total - cum[n - 2]) if extrapolate else 0.0
            out[k, 0] = v[n - 1, 0] + t * (v[n - 1, 0] - v[n - 2, 0])
            out[k, 1] = v[n - 1, 1] + t * (v[n - 1, 1] - v[n - 2, 1])
        else:
            while cum[i + 1] <= m:
                i += 1
            while cum[i] > m:
                i -= 1
            t = (m - cum[i]) / (cum[i + 1] - cum[i])
            out[k, 0] = v[i, 0] + t * (v[i + 1, 0] - v[i, 0])
            out[k, 1] = v[i, 1] + t * (v[i + 1, 1] - v[i, 1])


@njit(cache=True)
def _point_seg_dist2(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    l2 = dx * dx + dy * dy
    t = 0.0
    if l2 > 0.0:
        t = ((px - ax) * dx + (py - ay) * dy) / l2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    ex = ax + t * dx - px
    ey = ay + t * dy - py
    return ex * ex + ey * ey


@njit(cache=True)
def _seg_seg_dist2(ax, ay, bx, by, cx, cy, dx, dy):
    # a proper crossing gives 0; otherwise the minimum sits at an endpoint
    d1 = (dx - cx) * (ay - cy) - (dy - cy) * (ax - cx)
    d2 = (dx - cx) * (by - cy) - (dy - cy) * (bx - cx)
    d3 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    d4 = (bx - ax) * (dy - ay) - (by - ay) * (dx - ax)
    if ((d1 > 0.0 and d2 < 0.0) or (d1 < 0.0 and d2 > 0.0)) and (
        (d3 > 0.0 and d4 < 0.0) or (d3 < 0.0 and d4 > 0.0)
    ):
        return 0.0
    best = _point_seg_dist2(ax, ay, cx, cy, dx, dy)
    d = _point_seg_dist2(bx, by, cx, cy, dx, dy)
    if d < best:
        best = d
    d = _point_seg_dist2(cx, cy, ax, ay, bx, by)
    if d < best:
        best = d
    d = _point_seg_dist2(dx, dy, ax, ay, bx, by)
    if d < best:
        best = d
    return best


@njit(cache=True)
def _clipped_segment(v, cum, i, h):
    """Segment ``i`` of the path truncated at arc length ``h``."""
    ax = v[i, 0]
    ay = v[i, 1]
    if v.shape[0] == 1:
        return ax, ay, ax, ay
    bx = v[i + 1, 0]
    by = v[i + 1, 1]
    if h < cum[i + 1]:
        t = (h - cum[i]) / (cum[i + 1] - cum[i])
        bx = ax + t * (bx - ax)
        by = ay + t * (by - ay)
    return ax, ay, bx, by


@njit(cache=True)
def _n_segments(v, cum, h):
    n = v.shape[0]
    if n == 1 or h <= 0.0:
        return 1
    k = 1
    while k < n - 1 and cum[k] < h:
        k += 1
    return k


@njit(cache=True)
def _clipped_min_dist(v1, cum1, h1, v2, cum2, h2):
    """Minimum distance between the prefixes ``[0, h1]`` and ``[0, h2]`` of two paths."""
    n1 = _n_segments(v1, cum1, h1)
    n2 = _n_segments(v2, cum2, h2)
    best = np.inf
    for i in range(n1):
        ax, ay, bx, by = _clipped_segment(v1, cum1, i, h1)
        cut1 = v1.shape[0] > 1 and h1 < cum1[i + 1]
        for j in range(n2):
            cx, cy, dx, dy = _clipped_segment(v2, cum2, j, h2)
            d = _seg_seg_dist2(ax, ay, bx, by, cx, cy, dx, dy)
            if cut1 or (v2.shape[0] > 1 and h2 < cum2[j + 1]):
                # a clipped segment is a subset of the full one; keep rounding
                # in the interpolated endpoint from beating the full distance
                full = _seg_seg_dist2(
                    v1[i, 0], v1[i, 1], v1[min(i + 1, v1.shape[0] - 1), 0], v1[min(i + 1, v1.shape[0] - 1), 1],
                    v2[j, 0], v2[j, 1], v2[min(j + 1, v2.shape[0] - 1), 0], v2[min(j + 1, v2.shape[0] - 1), 1],
                )
                if full > d:
                    d = full
            if d < best:
                best = d
                if best == 0.0:
                    return 0.0
    return math.sqrt(best)


@njit(cache=True)
def _project_point(v, cum, px, py):
    """Arc length of the closest point on the path and the distance to it."""
    n = v.shape[0]
    best = np.inf
    best_m = 0.0
    for i in range(max(n - 1, 1)):
        ax = v[i, 0]
        ay = v[i, 1]
        if n == 1:
            bx, by = ax, ay
        else:
            bx = v[i + 1, 0]
            by = v[i + 1, 1]
        dx = bx - ax
        dy = by - ay
        l2 = dx * dx + dy * dy
        t = 0.0
        if l2 > 0.0:
            t = ((px - ax) * dx + (py - ay) * dy) / l2
            t = min(max(t, 0.0), 1.0)
        ex = ax + t * dx - px
        ey = ay + t * dy - py
        d = ex * ex + ey * ey
        if d < best:
            best = d
            best_m = cum[i] + t * math.sqrt(l2)
    return best_m, math.sqrt(best)


@njit(cache=True)
def _seg_intersection(ax, ay, bx, by, cx, cy, dx, dy, tol):
    """Parameters ``(t, u)`` of the intersection of ab and cd, or ``(-1, -1)``.

    For collinear overlaps the point with the smallest ``t`` is returned.
    """
    rx = bx - ax
    ry = by - ay
    qx = dx - cx
    qy = dy - cy
    lr = math.sqrt(rx * rx + ry * ry)
    lq = math.sqrt(qx * qx + qy * qy)
    wx = cx - ax
    wy = cy - ay
    denom = rx * qy - ry * qx
    if abs(denom) > 1e-12 * lr * lq:
        t = (wx * qy - wy * qx) / denom
        u = (wx * ry - wy * rx) / denom
        et = tol / lr
        eu = tol / lq
        if -et <= t <= 1.0 + et and -eu <= u <= 1.0 + eu:
            return min(max(t, 0.0), 1.0), min(max(u, 0.0), 1.0)
        return -1.0, -1.0
    # parallel: only collinear overlaps intersect
    if abs(wx * ry - wy * rx) > tol * lr:
        return -1.0, -1.0
    r2 = lr * lr
    t0 = (wx * rx + wy * ry) / r2
    t1 = ((dx - ax) * rx + (dy - ay) * ry) / r2
    lo = min(t0, t1)
    hi = max(t0, t1)
    et = tol / lr
    if hi < -et or lo > 1.0 + et:
        return -1.0, -1.0
    t = min(max(lo, 0.0), 1.0)
    px = ax + t * rx
    py = ay + t * ry
    u = ((px - cx) * qx + (py - cy) * qy) / (lq * lq)
    return t, min(max(u, 0.0), 1.0)


@njit(cache=True)
def _find_crossing(v1, cum1, v2, cum2, tol):
    n1 = v1.shape[0]
    n2 = v2.shape[0]
    for i in range(n1 - 1):
        best_t = np.inf
        best_m2 = np.inf
        for j in range(n2 - 1):
            t, u = _seg_intersection(
                v1[i, 0], v1[i, 1], v1[i + 1, 0], v1[i + 1, 1],
                v2[j, 0], v2[j, 1], v2[j + 1, 0], v2[j + 1, 1], tol,
            )
            if t < 0.0:
                continue
            m2 = cum2[j] + u * (cum2[j + 1] - cum2[j])
            if t < best_t or (t == best_t and m2 < best_m2):
                best_t = t
                best_m2 = m2
        if best_t <= 1.0:
            m1 = cum1[i] + best_t * (cum1[i + 1] - cum1[i])
            return True, m1, best_m2
    return False, 0.0, 0.0


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def point_at(path: PolylinePath, m: float) -> Point2:
    """Point at arc length ``m``, clamped to the path ends."""
    x, y = _point_at(path.vertices, path.cumlen, float(m))
    return Point2(x, y)


def sample_path(path: PolylinePath, arclens) -> np.ndarray:
    """Vectorized :func:`point_at` for a non-decreasing sequence of arc lengths."""
    arclens = np.ascontiguousarray(arclens, dtype=np.float64)
    out = np.empty((arclens.shape[0], 2))
    _sample_path(path.vertices, path.cumlen, arclens, out)
    return out


def min_path_distance(a: PolylinePath, b: PolylinePath) -> float:
    """Exact minimum Euclidean distance between two polylines (0 if they touch)."""
    return _clipped_min_dist(a.vertices, a.cumlen, np.inf, b.vertices, b.cumlen, np.inf)


def cut_path(path: PolylinePath, horizon: float) -> PolylinePath:
    """Prefix of ``path`` from arc length 0 to ``min(horizon, length)``.

    A zero horizon yields a point path at the start vertex.
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if horizon <= 0.0 or path.is_point:
        return PolylinePath.point(path.vertices[0])
    if horizon >= path.length:
        return path
    cum = path.cumlen
    k = int(np.searchsorted(cum, horizon, side="left"))
    # snap cuts within TOL of a vertex onto it so no sub-tolerance segment appears
    if cum[k] - horizon <= TOL:
        return PolylinePath(path.vertices[: k + 1])
    if horizon - cum[k - 1] <= TOL:
        return PolylinePath(path.vertices[:k])
    end = point_at(path, horizon)
    return PolylinePath(np.vstack([path.vertices[:k], [end]]))


def project(path: PolylinePath, p) -> tuple[float, float]:
    """Arc length of the closest point on ``path`` to ``p`` and the lateral distance."""
    return _project_point(path.vertices, path.cumlen, float(p[0]), float(p[1]))


def find_crossing(ego: PolylinePath, other: PolylinePath) -> Crossing | None:
    """First intersection of the two paths in ego arc-length order.

    Collinear overlaps count; the overlap start nearest the ego is reported.
    """
    if ego.is_point or other.is_point:
        return None
    found, m1, m2 = _find_crossing(ego.vertices, ego.cumlen, other.vertices, other.cumlen, TOL)
    if not found:
        return None
    return Crossing(point_at(ego, m1), float(m1), float(m2))
