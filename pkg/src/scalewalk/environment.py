"""Cell configurations: polygonal cells with explicit symmetric conductances.

Geometry is stored flat (one coordinate array plus ring and cell offsets) so
that configurations with ~10^6 cells stay cheap; ``region(i)`` materializes a
single cell as a :class:`Region` when exact predicates are needed.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import geometry as geo
from .errors import ConfigurationError, FormatError
from .geometry import Region, Square

FORMAT_VERSION = 1


@dataclass
class Lattice:
    """Lattice whose faces are the cells (needed for vertex-cell construction).

    ``coord_vertex[v]`` is the lattice vertex sitting at configuration
    coordinate ``v``, or -1 when that polygon corner is not a lattice vertex.
    """

    vertices: np.ndarray
    edges: np.ndarray
    conductance: np.ndarray
    coord_vertex: np.ndarray


@dataclass
class CellStats:
    area: float
    centroid: tuple
    diameter: float
    pi: float
    pi_star: float
    degree: int


@dataclass
class ValidationReport:
    ok: bool
    issues: list = field(default_factory=list)

    def __str__(self):
        if self.ok:
            return "valid"
        return "\n".join(self.issues)


@dataclass
class MomentStats:
    mean_pi_moment: float
    mean_pi_star_moment: float
    max_diameter_ratio: float
    n_cells: int


class CellConfiguration:
    def __init__(self, coords, ring_ptr, ring_hole, cell_ptr, edges, conductance, window: Square,
                 meta: dict | None = None, lattice: Lattice | None = None):
        self.coords = np.ascontiguousarray(coords, dtype=float).reshape(-1, 2)
        self.ring_ptr = np.asarray(ring_ptr, dtype=np.int64)
        self.ring_hole = np.asarray(ring_hole, dtype=bool)
        self.cell_ptr = np.asarray(cell_ptr, dtype=np.int64)
        self.window = window
        self.meta = dict(meta or {})
        self.lattice = lattice
        if self.ring_ptr[0] != 0 or self.ring_ptr[-1] != len(self.coords):
            raise ConfigurationError("ring offsets do not span the coordinate array")
        if np.any(np.diff(self.ring_ptr) < 3):
            raise ConfigurationError("every ring needs at least 3 vertices")
        if self.cell_ptr[0] != 0 or self.cell_ptr[-1] != len(self.ring_hole):
            raise ConfigurationError("cell offsets do not span the ring array")
        if np.any(np.diff(self.cell_ptr) < 1):
            raise ConfigurationError("every cell needs a ring")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        c = np.asarray(conductance, dtype=float).reshape(-1)
        if len(e) != len(c):
            raise ConfigurationError("edges and conductances differ in length")
        n = self.n_cells
        if len(e) and (e.min() < 0 or e.max() >= n):
            raise ConfigurationError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise ConfigurationError("self-loops are not allowed")
        self._canonicalize(e, c)
        a = self.area
        if np.any(~(a > 0)):
            bad = int(np.argmax(~(a > 0)))
            raise ConfigurationError(f"cell {bad} has non-positive area")

    def _canonicalize(self, e, c):
        lo = np.minimum(e[:, 0], e[:, 1])
        hi = np.maximum(e[:, 0], e[:, 1])
        key = lo * self.n_cells + hi
        order = np.argsort(key, kind="stable")
        key, lo, hi, c = key[order], lo[order], hi[order], c[order]
        first = np.ones(len(key), dtype=bool)
        first[1:] = key[1:] != key[:-1]
        self.asymmetric_pairs = []
        if not first.all():
            grp = np.cumsum(first) - 1
            cmin = np.full(first.sum(), np.inf)
            cmax = np.full(first.sum(), -np.inf)
            np.minimum.at(cmin, grp, c)
            np.maximum.at(cmax, grp, c)
            bad = np.nonzero(cmin != cmax)[0]
            starts = np.nonzero(first)[0]
            self.asymmetric_pairs = [(int(lo[starts[b]]), int(hi[starts[b]])) for b in bad]
        self.edges = np.stack([lo[first], hi[first]], axis=1) if len(key) else np.zeros((0, 2), np.int64)
        self.conductance = c[first]

    # ------------------------------------------------------------------
    # constructors

    @classmethod
    def from_regions(cls, regions, edges, conductance, window: Square, meta=None, lattice=None):
        coords, ring_ptr, hole, cell_ptr = [], [0], [], [0]
        for reg in regions:
            for r, h in zip(reg.rings, reg.holes):
                coords.append(r)
                ring_ptr.append(ring_ptr[-1] + len(r))
                hole.append(h)
            cell_ptr.append(cell_ptr[-1] + len(reg.rings))
        return cls(np.concatenate(coords), ring_ptr, hole, cell_ptr, edges, conductance, window, meta, lattice)

    @classmethod
    def from_rects(cls, x0, y0, x1, y1, edges, conductance, window: Square, meta=None, lattice=None):
        x0, y0, x1, y1 = (np.asarray(v, dtype=float) for v in (x0, y0, x1, y1))
        n = len(x0)
        coords = np.empty((n, 4, 2))
        coords[:, 0] = np.stack([x0, y0], 1)
        coords[:, 1] = np.stack([x1, y0], 1)
        coords[:, 2] = np.stack([x1, y1], 1)
        coords[:, 3] = np.stack([x0, y1], 1)
        ring_ptr = np.arange(n + 1) * 4
        return cls(coords.reshape(-1, 2), ring_ptr, np.zeros(n, bool), np.arange(n + 1), edges, conductance,
                   window, meta, lattice)

    # ------------------------------------------------------------------
    # basic geometry

    @property
    def n_cells(self) -> int:
        return len(self.cell_ptr) - 1

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def __len__(self):
        return self.n_cells

    def __repr__(self):
        return f"CellConfiguration({self.n_cells} cells, {self.n_edges} edges, window={self.window})"

    @cached_property
    def _vertex_ring(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.ring_hole)), np.diff(self.ring_ptr))

    @cached_property
    def _ring_moments(self):
        vr = self._vertex_ring
        nxt = np.arange(len(self.coords)) + 1
        nxt[self.ring_ptr[1:] - 1] = self.ring_ptr[:-1]
        o = self.coords[self.ring_ptr[:-1]][vr]
        p = self.coords - o
        q = self.coords[nxt] - o
        cr = p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]
        starts = self.ring_ptr[:-1]
        a = 0.5 * np.add.reduceat(cr, starts)
        mx = np.add.reduceat((p[:, 0] + q[:, 0]) * cr, starts) / 6.0
        my = np.add.reduceat((p[:, 1] + q[:, 1]) * cr, starts) / 6.0
        oo = self.coords[starts]
        return a, mx + a * oo[:, 0], my + a * oo[:, 1]

    @cached_property
    def area(self) -> np.ndarray:
        a, _, _ = self._ring_moments
        a = np.where(self.ring_hole, -np.abs(a), np.abs(a))
        return np.add.reduceat(a, self.cell_ptr[:-1])

    @cached_property
    def centroid(self) -> np.ndarray:
        a, mx, my = self._ring_moments
        s = np.where(self.ring_hole, -1.0, 1.0) * np.sign(a)
        starts = self.cell_ptr[:-1]
        cx = np.add.reduceat(s * mx, starts) / self.area
        cy = np.add.reduceat(s * my, starts) / self.area
        return np.stack([cx, cy], axis=1)

    @cached_property
    def _cell_vertex_ptr(self) -> np.ndarray:
        return self.ring_ptr[self.cell_ptr]

    @cached_property
    def bbox(self) -> np.ndarray:
        starts = self._cell_vertex_ptr[:-1]
        lo = np.minimum.reduceat(self.coords, starts, axis=0)
        hi = np.maximum.reduceat(self.coords, starts, axis=0)
        return np.concatenate([lo, hi], axis=1)

    @cached_property
    def diameter(self) -> np.ndarray:
        ptr = self._cell_vertex_ptr
        counts = np.diff(ptr)
        out = np.empty(self.n_cells)
        for k in np.unique(counts):
            idx = np.nonzero(counts == k)[0]
            if k <= 64:
                pts = self.coords[ptr[idx][:, None] + np.arange(k)[None, :]]
                best = np.zeros(len(idx))
                for j in range(1, k):
                    d = pts[:, j:, :] - pts[:, :-j, :]
                    best = np.maximum(best, (d * d).sum(-1).max(axis=1))
                out[idx] = np.sqrt(best)
            else:
                for i in idx:
                    out[i] = geo.point_set_diameter(self.coords[ptr[i]:ptr[i + 1]])
        return out

    @cached_property
    def is_rect(self) -> np.ndarray:
        single = np.diff(self.cell_ptr) == 1
        four = np.diff(self._cell_vertex_ptr) == 4
        b = self.bbox
        barea = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
        return single & four & (np.abs(barea - self.area) <= 1e-12 * barea)

    def region(self, i: int) -> Region:
        r0, r1 = self.cell_ptr[i], self.cell_ptr[i + 1]
        rings = [self.coords[self.ring_ptr[r]:self.ring_ptr[r + 1]] for r in range(r0, r1)]
        return Region(rings, list(self.ring_hole[r0:r1]))

    def cell_rings(self, i: int) -> list:
        r0, r1 = self.cell_ptr[i], self.cell_ptr[i + 1]
        return [(self.coords[self.ring_ptr[r]:self.ring_ptr[r + 1]], bool(self.ring_hole[r])) for r in range(r0, r1)]

    # ------------------------------------------------------------------
    # graph

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        n = self.n_cells
        e = self.edges
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.concatenate([self.conductance, self.conductance])
        m = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        m.sort_indices()
        return m

    @cached_property
    def pi(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    @cached_property
    def pi_star(self) -> np.ndarray:
        n = self.n_cells
        out = np.zeros(n)
        with np.errstate(divide="ignore"):
            inv = 1.0 / self.conductance
        np.add.at(out, self.edges[:, 0], inv)
        np.add.at(out, self.edges[:, 1], inv)
        return out

    @cached_property
    def degree(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        a = self.adjacency
        s, t = a.indptr[i], a.indptr[i + 1]
        return a.indices[s:t], a.data[s:t]

    def stats(self, i: int) -> CellStats:
        return CellStats(float(self.area[i]), tuple(self.centroid[i]), float(self.diameter[i]),
                         float(self.pi[i]), float(self.pi_star[i]), int(self.degree[i]))

    @cached_property
    def frame(self) -> np.ndarray:
        """Cells meeting the window boundary; frozen as boundary-only."""
        mask = np.zeros(self.n_cells, dtype=bool)
        mask[boundary_cells(self, self.window)] = True
        return mask

    # ------------------------------------------------------------------
    # spatial queries

    def _bbox_candidates(self, box, candidates=None) -> np.ndarray:
        b = self.bbox if candidates is None else self.bbox[candidates]
        m = (b[:, 0] <= box[2]) & (b[:, 2] >= box[0]) & (b[:, 1] <= box[3]) & (b[:, 3] >= box[1])
        idx = np.nonzero(m)[0]
        return idx if candidates is None else np.asarray(candidates)[idx]

    def cells_meeting_box(self, box, candidates=None) -> np.ndarray:
        """Indices of cells whose closed region meets the closed box (x0, y0, x1, y1)."""
        box = tuple(box.bounds) if isinstance(box, Square) else tuple(box)
        idx = self._bbox_candidates(box, candidates)
        if len(idx) == 0:
            return idx
        b = self.bbox[idx]
        sure = self.is_rect[idx] | ((b[:, 0] >= box[0]) & (b[:, 2] <= box[2]) & (b[:, 1] >= box[1]) & (b[:, 3] <= box[3]))
        keep = sure.copy()
        for j in np.nonzero(~sure)[0]:
            keep[j] = geo.region_meets_box(self.region(int(idx[j])), box)
        return idx[keep]

    def cells_meeting_segment(self, p, q, candidates=None) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        box = (min(p[0], q[0]), min(p[1], q[1]), max(p[0], q[0]), max(p[1], q[1]))
        idx = self._bbox_candidates(box, candidates)
        if len(idx) == 0:
            return idx
        axis_aligned = p[0] == q[0] or p[1] == q[1]
        sure = self.is_rect[idx] & axis_aligned
        keep = sure.copy()
        for j in np.nonzero(~sure)[0]:
            keep[j] = geo.region_meets_segment(self.region(int(idx[j])), p, q)
        return idx[keep]

    def cells_meeting_disk(self, center, radius: float, candidates=None) -> np.ndarray:
        cx, cy = center
        idx = self._bbox_candidates((cx - radius, cy - radius, cx + radius, cy + radius), candidates)
        if len(idx) == 0:
            return idx
        b = self.bbox[idx]
        dx = np.maximum(np.maximum(b[:, 0] - cx, cx - b[:, 2]), 0.0)
        dy = np.maximum(np.maximum(b[:, 1] - cy, cy - b[:, 3]), 0.0)
        near = np.hypot(dx, dy) <= radius
        rect = self.is_rect[idx]
        keep = near & rect
        for j in np.nonzero(near & ~rect)[0]:
            keep[j] = geo.region_meets_disk(self.region(int(idx[j])), center, radius)
        return idx[keep]

    def cells_meeting_polyline(self, line, closed: bool = False) -> np.ndarray:
        pts = np.asarray(line, dtype=float)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        idx = self._bbox_candidates((lo[0], lo[1], hi[0], hi[1]))
        keep = np.zeros(len(idx), dtype=bool)
        segs_a = pts if closed else pts[:-1]
        segs_b = np.roll(pts, -1, axis=0) if closed else pts[1:]
        for j, i in enumerate(idx):
            b = self.bbox[i]
            near = geo.segments_meet_box(segs_a, segs_b, b)
            if not near.any():
                continue
            if self.is_rect[i]:
                keep[j] = True
            else:
                reg = self.region(int(i))
                keep[j] = geo.region_meets_polyline(reg, pts, closed)
        return idx[keep]

    def box_overlap_area(self, box, idx) -> np.ndarray:
        """Area(H ∩ box) for the cells ``idx``."""
        box = tuple(box.bounds) if isinstance(box, Square) else tuple(box)
        idx = np.asarray(idx)
        b = self.bbox[idx]
        w = np.clip(np.minimum(b[:, 2], box[2]) - np.maximum(b[:, 0], box[0]), 0, None)
        h = np.clip(np.minimum(b[:, 3], box[3]) - np.maximum(b[:, 1], box[1]), 0, None)
        out = w * h
        inside = (b[:, 0] >= box[0]) & (b[:, 2] <= box[2]) & (b[:, 1] >= box[1]) & (b[:, 3] <= box[3])
        out[inside] = self.area[idx[inside]]
        rect = self.is_rect[idx]
        for j in np.nonzero(~rect & ~inside & (out > 0))[0]:
            out[j] = geo.region_box_area(self.region(int(idx[j])), box)
        return out

    @cached_property
    def _buckets(self):
        b = self.bbox
        w = self.window
        h = max(float(np.median(np.sqrt(self.area))), w.side / 4096.0)
        ox, oy = min(w.x, b[:, 0].min()), min(w.y, b[:, 1].min())
        ex, ey = max(w.x + w.side, b[:, 2].max()), max(w.y + w.side, b[:, 3].max())
        nx = int(math.ceil((ex - ox) / h)) + 1
        ny = int(math.ceil((ey - oy) / h)) + 1
        bx0 = np.clip(((b[:, 0] - ox) // h).astype(np.int64), 0, nx - 1)
        bx1 = np.clip(((b[:, 2] - ox) // h).astype(np.int64), 0, nx - 1)
        by0 = np.clip(((b[:, 1] - oy) // h).astype(np.int64), 0, ny - 1)
        by1 = np.clip(((b[:, 3] - oy) // h).astype(np.int64), 0, ny - 1)
        wx = bx1 - bx0 + 1
        wy = by1 - by0 + 1
        cnt = wx * wy
        cell = np.repeat(np.arange(self.n_cells), cnt)
        local = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        gx = bx0[cell] + local % wx[cell]
        gy = by0[cell] + local // wx[cell]
        bid = gx * ny + gy
        order = np.argsort(bid, kind="stable")
        ptr = np.zeros(nx * ny + 1, dtype=np.int64)
        np.add.at(ptr, bid + 1, 1)
        ptr = np.cumsum(ptr)
        return (ox, oy, h, nx, ny, ptr, cell[order])

    def locate(self, points) -> np.ndarray:
        """Cell containing each point (-1 outside every cell).

        Rectangles use half-open [x0, x1) x [y0, y1) so tilings give a unique answer.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ox, oy, h, nx, ny, ptr, cells = self._buckets
        gx = np.floor((pts[:, 0] - ox) / h).astype(np.int64)
        gy = np.floor((pts[:, 1] - oy) / h).astype(np.int64)
        valid = (gx >= 0) & (gx < nx) & (gy >= 0) & (gy < ny)
        bid = np.where(valid, gx * ny + gy, 0)
        start = ptr[bid]
        cnt = np.where(valid, ptr[bid + 1] - start, 0)
        pidx = np.repeat(np.arange(len(pts)), cnt)
        off = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        cand = cells[start[pidx] + off]
        b = self.bbox[cand]
        px, py = pts[pidx, 0], pts[pidx, 1]
        inb = (px >= b[:, 0]) & (px < b[:, 2]) & (py >= b[:, 1]) & (py < b[:, 3])
        closed_b = (px >= b[:, 0]) & (px <= b[:, 2]) & (py >= b[:, 1]) & (py <= b[:, 3])
        rect = self.is_rect[cand]
        hit = inb & rect
        for j in np.nonzero(~rect & closed_b)[0]:
            hit[j] = geo.points_in_region(pts[pidx[j]][None, :], self.region(int(cand[j])))[0]
        out = np.full(len(pts), -1, dtype=np.int64)
        if hit.any():
            hp, hc = pidx[hit], cand[hit]
            order = np.lexsort((hc, hp))
            hp, hc = hp[order], hc[order]
            first = np.ones(len(hp), dtype=bool)
            first[1:] = hp[1:] != hp[:-1]
            out[hp[first]] = hc[first]
        return out

    # ------------------------------------------------------------------
    # derived configurations

    def subset(self, idx, window: Square | None = None) -> "CellConfiguration":
        idx = np.asarray(idx, dtype=np.int64)
        rstart, rend = self.cell_ptr[idx], self.cell_ptr[idx + 1]
        rings = np.concatenate([np.arange(a, b) for a, b in zip(rstart, rend)]) if len(idx) else np.zeros(0, np.int64)
        vstart, vend = self.ring_ptr[rings], self.ring_ptr[rings + 1]
        vlen = vend - vstart
        vidx = np.repeat(vstart, vlen) + (np.arange(vlen.sum()) - np.repeat(np.cumsum(vlen) - vlen, vlen))
        ring_ptr = np.concatenate([[0], np.cumsum(vlen)])
        cell_ptr = np.concatenate([[0], np.cumsum(rend - rstart)])
        remap = np.full(self.n_cells, -1, dtype=np.int64)
        remap[idx] = np.arange(len(idx))
        e = remap[self.edges]
        keep = (e[:, 0] >= 0) & (e[:, 1] >= 0)
        meta = dict(self.meta)
        out = CellConfiguration(self.coords[vidx], ring_ptr, self.ring_hole[rings], cell_ptr, e[keep],
                                self.conductance[keep], window or self.window, meta)
        out.parent_index = idx
        return out

    def transformed(self, scale: float, shift=(0.0, 0.0)) -> "CellConfiguration":
        """Configuration of the cells scale * (H - shift)."""
        if not scale > 0:
            raise ValueError("scale must be positive")
        s = np.asarray(shift, dtype=float)
        w = self.window
        win = Square(scale * (w.x - s[0]), scale * (w.y - s[1]), scale * w.side)
        lat = None
        if self.lattice is not None:
            L = self.lattice
            lat = Lattice(scale * (L.vertices - s), L.edges, L.conductance, L.coord_vertex)
        return CellConfiguration(scale * (self.coords - s), self.ring_ptr, self.ring_hole, self.cell_ptr,
                                 self.edges, self.conductance, win, self.meta, lat)


# ----------------------------------------------------------------------
# module-level operations


def pi(config: CellConfiguration, i: int) -> float:
    return float(config.pi[i])


def pi_star(config: CellConfiguration, i: int) -> float:
    return float(config.pi_star[i])


def restrict(config: CellConfiguration, box) -> CellConfiguration:
    """Cells meeting the closed box, with the box as the new window."""
    sq = box if isinstance(box, Square) else Square(box[0], box[1], box[2] - box[0])
    out = config.subset(config.cells_meeting_box(sq), window=sq)
    parent = getattr(config, "parent_index", None)
    if parent is not None:
        out.parent_index = parent[out.parent_index]
    return out


def boundary_cells(config: CellConfiguration, box) -> np.ndarray:
    """Cells meeting the boundary of the box (corner points included)."""
    sq = box if isinstance(box, Square) else Square(box[0], box[1], box[2] - box[0])
    found = [config.cells_meeting_segment(p, q) for p, q in sq.boundary_segments()]
    return np.unique(np.concatenate(found)) if found else np.zeros(0, np.int64)


def _candidate_pairs(config: CellConfiguration) -> np.ndarray:
    ox, oy, h, nx, ny, ptr, cells = config._buckets
    counts = np.diff(ptr)
    pairs = []
    for b in np.nonzero(counts > 1)[0]:
        c = cells[ptr[b]:ptr[b + 1]]
        i, j = np.triu_indices(len(c), 1)
        pairs.append(np.stack([np.minimum(c[i], c[j]), np.maximum(c[i], c[j])], 1))
    if not pairs:
        return np.zeros((0, 2), np.int64)
    return np.unique(np.concatenate(pairs), axis=0)


def validate(config: CellConfiguration, lines=None, check_simple: bool = False) -> ValidationReport:
    """Check structural invariants; never raises on an invalid configuration."""
    issues = []
    for a, b in config.asymmetric_pairs:
        issues.append(f"asymmetric conductance on pair ({a}, {b})")
    bad = np.nonzero(~(config.conductance > 0) | ~np.isfinite(config.conductance))[0]
    for k in bad:
        a, b = config.edges[k]
        issues.append(f"non-positive conductance {config.conductance[k]!r} on edge ({a}, {b})")
    if check_simple:
        for i in range(config.n_cells):
            if not config.region(i).is_simple():
                issues.append(f"cell {i} has a self-intersecting ring")
    area = config.area
    bb = config.bbox
    pairs = _candidate_pairs(config)
    if len(pairs):
        a, b = pairs[:, 0], pairs[:, 1]
        ix = np.minimum(bb[a, 2], bb[b, 2]) - np.maximum(bb[a, 0], bb[b, 0])
        iy = np.minimum(bb[a, 3], bb[b, 3]) - np.maximum(bb[a, 1], bb[b, 1])
        pos = (ix > 0) & (iy > 0)
        for k in np.nonzero(pos)[0]:
            i, j = int(a[k]), int(b[k])
            tol = 1e-9 * min(area[i], area[j])
            if config.is_rect[i] and config.is_rect[j]:
                ov = ix[k] * iy[k]
            else:
                ov = geo.region_intersection_area(config.region(i), config.region(j))
            if ov > tol:
                issues.append(f"cells {i} and {j} overlap with area {ov:.3g}")
    e = config.edges
    for k in range(len(e)):
        i, j = int(e[k, 0]), int(e[k, 1])
        if config.is_rect[i] and config.is_rect[j]:
            gx = max(bb[i, 0] - bb[j, 2], bb[j, 0] - bb[i, 2], 0.0)
            gy = max(bb[i, 1] - bb[j, 3], bb[j, 1] - bb[i, 3], 0.0)
            d = math.hypot(gx, gy)
        else:
            gx = max(bb[i, 0] - bb[j, 2], bb[j, 0] - bb[i, 2], 0.0)
            gy = max(bb[i, 1] - bb[j, 3], bb[j, 1] - bb[i, 3], 0.0)
            d = math.hypot(gx, gy)
            if d <= 1e-9:
                d = geo.region_distance(config.region(i), config.region(j))
        if d > 1e-9:
            issues.append(f"adjacent cells {i} and {j} are disjoint (gap {d:.3g})")
    for seg in lines or []:
        p, q = np.asarray(seg[0], float), np.asarray(seg[1], float)
        idx = config.cells_meeting_segment(p, q)
        if len(idx) == 0:
            continue
        sub = config.adjacency[idx][:, idx]
        ncomp, _ = connected_components(sub, directed=False)
        if ncomp > 1:
            issues.append(f"cells along segment {tuple(p)}-{tuple(q)} form {ncomp} components")
    return ValidationReport(ok=not issues, issues=issues)


def moment_stats(config: CellConfiguration, window) -> MomentStats:
    """Area-weighted means of diam^2 pi / Area and diam^2 pi* / Area over the window."""
    sq = window if isinstance(window, Square) else Square(window[0], window[1], window[2] - window[0])
    idx = config.cells_meeting_box(sq)
    w = config.box_overlap_area(sq, idx)
    d2 = config.diameter[idx] ** 2
    a = config.area[idx]
    m1 = d2 * config.pi[idx] / a
    m2 = d2 * config.pi_star[idx] / a
    tot = w.sum()
    return MomentStats(float((w * m1).sum() / tot), float((w * m2).sum() / tot),
                       float(config.diameter[idx].max() / sq.side), int(len(idx)))


# ----------------------------------------------------------------------
# serialization


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        raise FormatError("non-finite number cannot be serialized")
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def dumps_json(obj, indent: int = 0) -> str:
    """JSON with every real written at 17 significant digits."""
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_, int, np.integer, float, np.floating)):
        return _num(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        items = [json.dumps(str(k)) + ":" + dumps_json(v) for k, v in obj.items()]
        return "{" + ",".join(items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps_json(v) for v in obj) + "]"
    raise FormatError(f"cannot serialize {type(obj).__name__}")


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def config_to_dict(config: CellConfiguration) -> dict:
    w = config.window
    cells = []
    for i in range(config.n_cells):
        rings = []
        for ring, hole in config.cell_rings(i):
            rings.append({"hole": bool(hole), "points": ring.tolist()})
        cells.append({"id": i, "rings": rings})
    edges = [{"a": int(a), "b": int(b), "conductance": float(c)}
             for (a, b), c in zip(config.edges, config.conductance)]
    out = {
        "version": FORMAT_VERSION,
        "window": {"anchor_x": w.x, "anchor_y": w.y, "side": w.side},
        "cells": cells,
        "edges": edges,
        "meta": {
            "generator": config.meta.get("generator", "unknown"),
            "seed": config.meta.get("seed"),
            "parameters": config.meta.get("parameters", {}),
        },
    }
    if config.lattice is not None:
        L = config.lattice
        out["lattice"] = {"vertices": L.vertices.tolist(), "edges": L.edges.tolist(),
                          "conductance": L.conductance.tolist(), "coord_vertex": L.coord_vertex.tolist()}
    return out


def config_from_dict(d: dict) -> CellConfiguration:
    if not isinstance(d, dict) or "version" not in d:
        raise FormatError("missing version field")
    if d["version"] != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {d['version']!r}")
    try:
        w = d["window"]
        window = Square(float(w["anchor_x"]), float(w["anchor_y"]), float(w["side"]))
        cells = sorted(d["cells"], key=lambda c: int(c["id"]))
        ids = [int(c["id"]) for c in cells]
        if ids != list(range(len(ids))):
            raise FormatError("cell ids must be 0..n-1")
        coords, ring_ptr, hole, cell_ptr = [], [0], [], [0]
        for c in cells:
            for r in c["rings"]:
                pts = np.asarray(r["points"], dtype=float).reshape(-1, 2)
                coords.append(pts)
                ring_ptr.append(ring_ptr[-1] + len(pts))
                hole.append(bool(r.get("hole", False)))
            cell_ptr.append(cell_ptr[-1] + len(c["rings"]))
        edges = np.array([[int(e["a"]), int(e["b"])] for e in d["edges"]], dtype=np.int64).reshape(-1, 2)
        cond = np.array([float(e["conductance"]) for e in d["edges"]], dtype=float)
        meta = dict(d.get("meta") or {})
        lat = None
        if "lattice" in d:
            L = d["lattice"]
            lat = Lattice(np.asarray(L["vertices"], float).reshape(-1, 2), np.asarray(L["edges"], np.int64).reshape(-1, 2),
                          np.asarray(L["conductance"], float), np.asarray(L["coord_vertex"], np.int64))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed configuration: {exc}") from exc
    return CellConfiguration(np.concatenate(coords), ring_ptr, hole, cell_ptr, edges, cond, window, meta, lat)


def save_config(config: CellConfiguration, path) -> None:
    atomic_write_text(path, dumps_json(config_to_dict(config)) + "\n")


def load_config(path) -> CellConfiguration:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc}") from exc
    return config_from_dict(d)
