"""Planar primitives: squares, polygonal regions, timed curves and curve distances.

Rings are stored open (first vertex not repeated). Outer rings are kept
counter-clockwise and holes clockwise, so signed shoelace sums give areas
directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import GeometryError

_AREA_EPS = 1e-14


@dataclass(frozen=True)
class Square:
    """Axis-aligned square [x, x+side] x [y, y+side]."""

    x: float
    y: float
    side: float

    def __post_init__(self):
        if not (self.side > 0 and math.isfinite(self.side)):
            raise GeometryError(f"square side must be positive, got {self.side}")

    @property
    def center(self) -> tuple[float, float]:
        h = 0.5 * self.side
        return (self.x + h, self.y + h)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.x + self.side, self.y + self.side)

    def corners(self) -> np.ndarray:
        x0, y0, x1, y1 = self.bounds
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)

    def boundary_segments(self) -> list[tuple[np.ndarray, np.ndarray]]:
        c = self.corners()
        return [(c[i], c[(i + 1) % 4]) for i in range(4)]

    def enlarged(self, factor: float) -> "Square":
        """Same center, side multiplied by ``factor``."""
        cx, cy = self.center
        s = self.side * factor
        return Square(cx - 0.5 * s, cy - 0.5 * s, s)

    def contains(self, pts, half_open: bool = False) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x0, y0, x1, y1 = self.bounds
        if half_open:
            return (pts[:, 0] >= x0) & (pts[:, 0] < x1) & (pts[:, 1] >= y0) & (pts[:, 1] < y1)
        return (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)

    def inside(self, other: "Square", tol: float = 0.0) -> bool:
        a = self.bounds
        b = other.bounds
        return a[0] >= b[0] - tol and a[1] >= b[1] - tol and a[2] <= b[2] + tol and a[3] <= b[3] + tol


def _clean_ring(points) -> np.ndarray:
    ring = np.asarray(points, dtype=float)
    if ring.ndim != 2 or ring.shape[1] != 2:
        raise GeometryError("ring must be an (k, 2) array of points")
    if not np.all(np.isfinite(ring)):
        raise GeometryError("ring has non-finite coordinates")
    if len(ring) > 1 and np.array_equal(ring[0], ring[-1]):
        ring = ring[:-1]
    if len(ring) > 1:
        keep = np.any(ring != np.roll(ring, -1, axis=0), axis=1)
        ring = ring[keep]
    return ring


def ring_signed_area(ring: np.ndarray) -> float:
    p = ring - ring[0]
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _ring_moments(ring: np.ndarray) -> tuple[float, float, float]:
    """Signed area and first moments (absolute coordinates)."""
    o = ring[0]
    p = ring - o
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    a = 0.5 * float(cr.sum())
    mx = float(((x + xn) * cr).sum()) / 6.0
    my = float(((y + yn) * cr).sum()) / 6.0
    return a, mx + a * o[0], my + a * o[1]


class Region:
    """Finite union of interior-disjoint polygons with holes.

    ``rings`` holds every ring (outer and hole) and ``holes`` the matching flags.
    """

    __slots__ = ("rings", "holes")

    def __init__(self, rings: Sequence, holes: Sequence[bool] | None = None):
        if holes is None:
            holes = [False] * len(rings)
        if len(rings) == 0:
            raise GeometryError("region needs at least one ring")
        if len(holes) != len(rings):
            raise GeometryError("holes flags must match rings")
        out = []
        for r, h in zip(rings, holes):
            ring = _clean_ring(r)
            if len(ring) < 3:
                raise GeometryError("polygon ring needs at least 3 distinct vertices")
            a = ring_signed_area(ring)
            ext = float(np.ptp(ring, axis=0).max())
            if abs(a) <= _AREA_EPS * ext * ext:
                raise GeometryError("degenerate polygon ring (zero area)")
            if (a < 0) != bool(h):
                ring = ring[::-1].copy()
            out.append(ring)
        if not any(not h for h in holes):
            raise GeometryError("region needs an outer ring")
        self.rings = tuple(out)
        self.holes = tuple(bool(h) for h in holes)

    @classmethod
    def rect(cls, x0, y0, x1, y1) -> "Region":
        return cls([[(x0, y0), (x1, y0), (x1, y1), (x0, y1)]])

    @classmethod
    def polygon(cls, outer, holes=()) -> "Region":
        return cls([outer, *holes], [False] + [True] * len(holes))

    @classmethod
    def from_square(cls, sq: Square) -> "Region":
        return cls([sq.corners()])

    def vertices(self) -> np.ndarray:
        return np.concatenate(self.rings)

    def bbox(self) -> tuple[float, float, float, float]:
        v = self.vertices()
        lo, hi = v.min(axis=0), v.max(axis=0)
        return (lo[0], lo[1], hi[0], hi[1])

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.concatenate(self.rings)
        b = np.concatenate([np.roll(r, -1, axis=0) for r in self.rings])
        return a, b

    def is_simple(self) -> bool:
        return all(_ring_is_simple(r) for r in self.rings)

    def __repr__(self):
        return f"Region({len(self.rings)} rings, area={region_area(self):.6g})"


def region_area(region: Region) -> float:
    return float(sum(ring_signed_area(r) for r in region.rings))


def region_centroid(region: Region) -> tuple[float, float]:
    a = mx = my = 0.0
    for r in region.rings:
        ra, rx, ry = _ring_moments(r)
        a += ra
        mx += rx
        my += ry
    if a <= 0:
        raise GeometryError("region has non-positive area")
    return (mx / a, my / a)


def region_diameter(region: Region) -> float:
    return point_set_diameter(region.vertices())


def point_set_diameter(v: np.ndarray) -> float:
    if len(v) > 256:
        from scipy.spatial import ConvexHull

        try:
            v = v[ConvexHull(v).vertices]
        except Exception:
            pass
    d = v[:, None, :] - v[None, :, :]
    return float(np.sqrt((d * d).sum(-1).max()))


def _ring_is_simple(ring: np.ndarray) -> bool:
    n = len(ring)
    a = ring
    b = np.roll(ring, -1, axis=0)
    for i in range(n):
        hit = segments_intersect(a[i], b[i], a, b)
        # adjacent edges share an endpoint
        hit[i] = False
        hit[(i + 1) % n] = False
        hit[(i - 1) % n] = False
        if hit.any():
            return False
    return True


# ---------------------------------------------------------------------------
# predicates (closed sets)


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def segments_intersect(p, q, a, b) -> np.ndarray:
    """Closed segment [p, q] against many closed segments [a_i, b_i]."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    px, py = p
    qx, qy = q
    d1 = _orient(px, py, qx, qy, a[:, 0], a[:, 1])
    d2 = _orient(px, py, qx, qy, b[:, 0], b[:, 1])
    d3 = _orient(a[:, 0], a[:, 1], b[:, 0], b[:, 1], px, py)
    d4 = _orient(a[:, 0], a[:, 1], b[:, 0], b[:, 1], qx, qy)
    proper = (((d1 > 0) & (d2 < 0)) | ((d1 < 0) & (d2 > 0))) & (((d3 > 0) & (d4 < 0)) | ((d3 < 0) & (d4 > 0)))

    def on_seg(ux, uy, vx, vy, wx, wy):
        return (np.minimum(ux, vx) <= wx) & (wx <= np.maximum(ux, vx)) & (np.minimum(uy, vy) <= wy) & (wy <= np.maximum(uy, vy))

    touch = (
        ((d1 == 0) & on_seg(px, py, qx, qy, a[:, 0], a[:, 1]))
        | ((d2 == 0) & on_seg(px, py, qx, qy, b[:, 0], b[:, 1]))
        | ((d3 == 0) & on_seg(a[:, 0], a[:, 1], b[:, 0], b[:, 1], px, py))
        | ((d4 == 0) & on_seg(a[:, 0], a[:, 1], b[:, 0], b[:, 1], qx, qy))
    )
    return proper | touch


def segments_meet_box(a, b, box) -> np.ndarray:
    """Liang-Barsky test of closed segments [a_i, b_i] against a closed box."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    x0, y0, x1, y1 = box
    d = b - a
    t0 = np.zeros(len(a))
    t1 = np.ones(len(a))
    ok = np.ones(len(a), dtype=bool)
    for p, q in (
        (-d[:, 0], a[:, 0] - x0),
        (d[:, 0], x1 - a[:, 0]),
        (-d[:, 1], a[:, 1] - y0),
        (d[:, 1], y1 - a[:, 1]),
    ):
        par = p == 0
        ok &= ~(par & (q < 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(par, 0.0, q / np.where(par, 1.0, p))
        neg = (p < 0) & ~par
        pos = (p > 0) & ~par
        t0 = np.where(neg, np.maximum(t0, r), t0)
        t1 = np.where(pos, np.minimum(t1, r), t1)
    return ok & (t0 <= t1)


def point_segment_distance(pt, a, b) -> np.ndarray:
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    d = b - a
    dd = (d * d).sum(1)
    w = np.asarray(pt, dtype=float) - a
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(dd > 0, (w * d).sum(1) / np.where(dd > 0, dd, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    c = a + t[:, None] * d
    return np.hypot(*(np.asarray(pt, dtype=float) - c).T)


def points_in_ring(pts: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Even-odd ray casting; points on the boundary resolve either way."""
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0:1], pts[:, 1:2]
    a = ring[None, :, :]
    b = np.roll(ring, -1, axis=0)[None, :, :]
    ay, by = a[..., 1], b[..., 1]
    ax, bx = a[..., 0], b[..., 0]
    cond = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = ax + (y - ay) * (bx - ax) / (by - ay)
    cross = cond & (x < xint)
    return (cross.sum(axis=1) % 2) == 1


def points_in_region(pts, region: Region) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    count = np.zeros(len(pts), dtype=int)
    for r, h in zip(region.rings, region.holes):
        inside = points_in_ring(pts, r)
        count += np.where(inside, -1 if h else 1, 0)
    return count > 0


def region_meets_box(region: Region, box) -> bool:
    bx = region.bbox()
    if bx[2] < box[0] or bx[0] > box[2] or bx[3] < box[1] or bx[1] > box[3]:
        return False
    if bx[0] >= box[0] and bx[2] <= box[2] and bx[1] >= box[1] and bx[3] <= box[3]:
        return True
    a, b = region.edges()
    if segments_meet_box(a, b, box).any():
        return True
    return bool(points_in_region([[box[0], box[1]]], region)[0])


def region_meets_segment(region: Region, p, q) -> bool:
    bx = region.bbox()
    if max(p[0], q[0]) < bx[0] or min(p[0], q[0]) > bx[2] or max(p[1], q[1]) < bx[1] or min(p[1], q[1]) > bx[3]:
        return False
    a, b = region.edges()
    if segments_intersect(np.asarray(p, float), np.asarray(q, float), a, b).any():
        return True
    return bool(points_in_region([p], region)[0])


def region_meets_disk(region: Region, center, radius: float) -> bool:
    a, b = region.edges()
    if point_segment_distance(center, a, b).min() <= radius:
        return True
    return bool(points_in_region([center], region)[0])


def region_meets_polyline(region: Region, line: np.ndarray, closed: bool = False) -> bool:
    pts = np.asarray(line, dtype=float)
    nxt = np.roll(pts, -1, axis=0) if closed else pts[1:]
    cur = pts if closed else pts[:-1]
    a, b = region.edges()
    for p, q in zip(cur, nxt):
        if segments_intersect(p, q, a, b).any():
            return True
    return bool(points_in_region(pts[:1], region)[0])


def region_meets_region(r1: Region, r2: Region) -> bool:
    a, b = r2.edges()
    for ring in r1.rings:
        nxt = np.roll(ring, -1, axis=0)
        for p, q in zip(ring, nxt):
            if segments_intersect(p, q, a, b).any():
                return True
    if points_in_region(r1.rings[0][:1], r2)[0]:
        return True
    return bool(points_in_region(r2.rings[0][:1], r1)[0])


def region_distance(r1: Region, r2: Region) -> float:
    if region_meets_region(r1, r2):
        return 0.0
    best = math.inf
    a2, b2 = r2.edges()
    a1, b1 = r1.edges()
    for p in r1.vertices():
        best = min(best, float(point_segment_distance(p, a2, b2).min()))
    for p in r2.vertices():
        best = min(best, float(point_segment_distance(p, a1, b1).min()))
    return best


# ---------------------------------------------------------------------------
# clipping


def clip_ring_convex(ring: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of any ring by a CCW convex polygon."""
    out = [tuple(p) for p in ring]
    m = len(clipper)
    for i in range(m):
        if not out:
            break
        cx0, cy0 = clipper[i]
        cx1, cy1 = clipper[(i + 1) % m]
        inp = out
        out = []
        prev = inp[-1]
        sp = _orient(cx0, cy0, cx1, cy1, prev[0], prev[1])
        for cur in inp:
            sc = _orient(cx0, cy0, cx1, cy1, cur[0], cur[1])
            if sc >= 0:
                if sp < 0:
                    out.append(_cut(prev, cur, sp, sc))
                out.append(cur)
            elif sp >= 0:
                out.append(_cut(prev, cur, sp, sc))
            prev, sp = cur, sc
    return np.array(out, dtype=float).reshape(-1, 2)


def _cut(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def ring_box_area(ring: np.ndarray, box) -> float:
    """Signed area of ring intersected with box (sign follows orientation)."""
    x0, y0, x1, y1 = box
    clipper = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)
    sign = 1.0 if ring_signed_area(ring) > 0 else -1.0
    base = ring if sign > 0 else ring[::-1]
    c = clip_ring_convex(base, clipper)
    if len(c) < 3:
        return 0.0
    return sign * ring_signed_area(c)


def region_box_area(region: Region, box) -> float:
    return float(sum(ring_box_area(r, box) for r in region.rings))


def triangulate_ring(ring: np.ndarray) -> list[np.ndarray]:
    """Ear clipping of a simple CCW ring into CCW triangles."""
    idx = list(range(len(ring)))
    tris = []
    guard = 0
    while len(idx) > 3 and guard < 10 * len(ring) ** 2:
        guard += 1
        n = len(idx)
        for k in range(n):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % n]
            a, b, c = ring[i0], ring[i1], ring[i2]
            o = _orient(*a, *b, *c)
            if o == 0:
                # zero-area corner: dropping it leaves the area unchanged
                idx.pop(k)
                break
            if o < 0:
                continue
            others = ring[[j for j in idx if j not in (i0, i1, i2)]]
            if len(others):
                same = (np.all(others == a, axis=1) | np.all(others == b, axis=1) | np.all(others == c, axis=1))
                o2 = others[~same]
                w1 = _orient(*a, *b, o2[:, 0], o2[:, 1])
                w2 = _orient(*b, *c, o2[:, 0], o2[:, 1])
                w3 = _orient(*c, *a, o2[:, 0], o2[:, 1])
                # vertices on the ear's boundary block it too
                if np.any((w1 >= 0) & (w2 >= 0) & (w3 >= 0)):
                    continue
            tris.append(np.array([a, b, c]))
            idx.pop(k)
            break
        else:
            break
    if len(idx) == 3:
        tri = ring[idx]
        if _orient(*tri[0], *tri[1], *tri[2]) > 0:
            tris.append(tri)
    return tris


def ring_intersection_area(r1: np.ndarray, r2: np.ndarray) -> float:
    """Unsigned area of the intersection of two simple rings."""
    a = r1 if ring_signed_area(r1) > 0 else r1[::-1]
    b = r2 if ring_signed_area(r2) > 0 else r2[::-1]
    total = 0.0
    for tri in triangulate_ring(a):
        c = clip_ring_convex(b, tri)
        if len(c) >= 3:
            total += ring_signed_area(c)
    return max(total, 0.0)


def region_intersection_area(r1: Region, r2: Region) -> float:
    total = 0.0
    for ra, ha in zip(r1.rings, r1.holes):
        for rb, hb in zip(r2.rings, r2.holes):
            s = -1.0 if (ha != hb) else 1.0
            total += s * ring_intersection_area(ra, rb)
    return total


# ---------------------------------------------------------------------------
# curves


class TimedCurve:
    """Piecewise-linear curve through ``points`` at strictly increasing ``times``."""

    __slots__ = ("times", "points")

    def __init__(self, times, points):
        t = np.asarray(times, dtype=float)
        p = np.asarray(points, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise GeometryError("timed curve needs at least 2 samples")
        if p.shape != (len(t), 2):
            raise GeometryError("points must be (len(times), 2)")
        if np.any(np.diff(t) <= 0):
            raise GeometryError("times must be strictly increasing")
        self.times = t
        self.points = p

    def __len__(self):
        return len(self.times)

    def stopped_at_exit(self, radius: float) -> np.ndarray:
        """Polyline of the curve stopped at its first exit from the closed disk B_radius(0)."""
        return _stop_polyline(self.points, radius)


def _as_polyline(c) -> np.ndarray:
    if isinstance(c, TimedCurve):
        return c.points
    p = np.asarray(c, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2 or len(p) < 1:
        raise GeometryError("polyline must be a non-empty (k, 2) array")
    return p


def _stop_polyline(p: np.ndarray, radius: float) -> np.ndarray:
    r2 = radius * radius
    n2 = (p * p).sum(1)
    if n2[0] > r2:
        return p[:1]
    out = n2 > r2
    if not out.any():
        return p
    j = int(np.argmax(out))
    a, b = p[j - 1], p[j]
    d = b - a
    qa, qb, qc = d @ d, 2 * (a @ d), a @ a - r2
    disc = max(qb * qb - 4 * qa * qc, 0.0)
    t = (-qb + math.sqrt(disc)) / (2 * qa)
    t = min(max(t, 0.0), 1.0)
    return np.vstack([p[:j], a + t * d])


def _free_interval(p, a, b, eps):
    """Parameters t in [0,1] with |a + t(b-a) - p| <= eps, or None."""
    d = b - a
    dd = d @ d
    w = a - p
    if dd == 0:
        return (0.0, 1.0) if w @ w <= eps * eps else None
    bq = 2 * (w @ d)
    cq = w @ w - eps * eps
    disc = bq * bq - 4 * dd * cq
    if disc < 0:
        return None
    s = math.sqrt(disc)
    lo = (-bq - s) / (2 * dd)
    hi = (-bq + s) / (2 * dd)
    lo, hi = max(lo, 0.0), min(hi, 1.0)
    if lo > hi:
        return None
    return (lo, hi)


def frechet_decide(P: np.ndarray, Q: np.ndarray, eps: float) -> bool:
    """Free-space reachability: is the Frechet distance at most eps?"""
    n, m = len(P) - 1, len(Q) - 1
    e2 = eps * eps
    if np.sum((P[0] - Q[0]) ** 2) > e2 or np.sum((P[-1] - Q[-1]) ** 2) > e2:
        return False
    if n == 0:
        return bool(np.all(((Q - P[0]) ** 2).sum(1) <= e2))
    if m == 0:
        return bool(np.all(((P - Q[0]) ** 2).sum(1) <= e2))
    # LR[j]: reachable interval on vertical edge (current i) over Q-segment j
    LR = [None] * m
    ok = True
    for j in range(m):
        f = _free_interval(P[0], Q[j], Q[j + 1], eps)
        if ok and f is not None and f[0] == 0.0:
            LR[j] = f
            ok = f[1] == 1.0
        else:
            ok = False
    bottom_ok = True
    for i in range(n):
        f = _free_interval(Q[0], P[i], P[i + 1], eps)
        if bottom_ok and f is not None and f[0] == 0.0:
            BR = f
            bottom_ok = f[1] == 1.0
        else:
            BR = None
            bottom_ok = False
        newLR = [None] * m
        for j in range(m):
            lf = _free_interval(P[i + 1], Q[j], Q[j + 1], eps)
            bf = _free_interval(Q[j + 1], P[i], P[i + 1], eps)
            left = LR[j]
            if lf is None:
                right = None
            elif BR is not None:
                right = lf
            elif left is not None:
                lo = max(lf[0], left[0])
                right = (lo, lf[1]) if lo <= lf[1] else None
            else:
                right = None
            if bf is None:
                top = None
            elif left is not None:
                top = bf
            elif BR is not None:
                lo = max(bf[0], BR[0])
                top = (lo, bf[1]) if lo <= bf[1] else None
            else:
                top = None
            newLR[j] = right
            BR = top
        LR = newLR
    last = LR[m - 1]
    return last is not None and last[1] == 1.0


def _critical_values(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    vals = [np.hypot(*(P[0] - Q[0])), np.hypot(*(P[-1] - Q[-1]))]
    out = [np.array(vals)]
    for A, B in ((P, Q), (Q, P)):
        if len(B) < 2:
            out.append(np.sqrt(((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)).ravel())
            continue
        a, b = B[:-1], B[1:]
        for p in A:
            out.append(point_segment_distance(p, a, b))
        if len(A) >= 2:
            ii, jj = np.triu_indices(len(A), 1)
            pk, pl = A[ii], A[jj]
            for s in range(len(a)):
                d = b[s] - a[s]
                u = pl - pk
                den = 2 * (u @ d)
                num = (pl * pl).sum(1) - (pk * pk).sum(1) - 2 * (u @ a[s])
                with np.errstate(divide="ignore", invalid="ignore"):
                    t = num / den
                good = np.isfinite(t) & (t >= 0) & (t <= 1)
                if good.any():
                    q = a[s] + t[good, None] * d
                    out.append(np.hypot(*(q - pk[good]).T))
    return np.unique(np.concatenate(out))


def frechet_distance(a, b, tol: float = 1e-9, max_candidates: int = 2_000_000) -> float:
    """Frechet distance between polylines.

    Small inputs are searched over the finite set of critical values, which
    makes the result exact up to rounding; otherwise bisection to ``tol``.
    """
    P = _as_polyline(a)
    Q = _as_polyline(b)

    def decide(e):
        return frechet_decide(P, Q, e * (1 + 1e-12) + 1e-15)

    n, m = len(P), len(Q)
    if n * n * m + m * m * n <= max_candidates:
        cand = _critical_values(P, Q)
        lo, hi = 0, len(cand) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if decide(cand[mid]):
                hi = mid
            else:
                lo = mid + 1
        return float(cand[lo])
    lo = 0.0
    hi = float(max(np.hypot(*(P[0] - Q[0])), 1e-300))
    while not decide(hi):
        hi *= 2
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if decide(mid):
            hi = mid
        else:
            lo = mid
    return hi


def dcmp(a, b, tol: float = 1e-9) -> float:
    """Curve distance modulo increasing reparameterization (times are ignored)."""
    return frechet_distance(a, b, tol=tol)


def dcmp_loc(a, b, r_max: float = 10.0, n_quad: int = 64, tol: float = 1e-9) -> tuple[float, float]:
    """Localized curve distance by midpoint quadrature on [1, r_max].

    Returns ``(value, tail)``; the truncated part of the integral is at most ``tail``.
    """
    if r_max <= 1:
        raise ValueError("r_max must exceed 1")
    P = _as_polyline(a)
    Q = _as_polyline(b)
    h = (r_max - 1.0) / n_quad
    total = 0.0
    for k in range(n_quad):
        r = 1.0 + (k + 0.5) * h
        d = frechet_distance(_stop_polyline(P, r), _stop_polyline(Q, r), tol=tol)
        total += h * math.exp(-r) * min(1.0, d)
    return total, math.exp(-r_max)
