"""Environment generators: grids, split grid, percolation faces, long-range cells, vertex cells."""
from __future__ import annotations

import math
from collections import defaultdict

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import geometry as geo
from .environment import CellConfiguration, Lattice
from .errors import ConfigurationError
from .geometry import Region, Square
from .rng import stream

TENTACLE_WIDTH = 1e-10


def parse_law(law: str):
    """Conductance law from a string such as ``uniform:1:2`` or ``constant``.

    Returns a function ``(rng, size) -> array``.
    """
    parts = str(law).split(":")
    name, args = parts[0].lower(), [float(x) for x in parts[1:]]
    if name == "constant":
        c = args[0] if args else 1.0
        if not c > 0:
            raise ValueError("constant conductance must be positive")
        return lambda rng, size: np.full(size, c)
    if name == "uniform":
        if len(args) != 2 or not (0 < args[0] <= args[1]):
            raise ValueError("uniform law needs 0 < a <= b, as uniform:a:b")
        a, b = args
        return lambda rng, size: a + (b - a) * rng.random(size)
    if name == "lognormal":
        mu, sig = (args + [0.0, 1.0])[:2] if args else (0.0, 1.0)
        return lambda rng, size: np.exp(mu + sig * rng.standard_normal(size))
    if name == "twovalue":
        if len(args) != 3:
            raise ValueError("twovalue law needs twovalue:a:b:p")
        a, b, p = args
        return lambda rng, size: np.where(rng.random(size) < p, a, b)
    raise ValueError(f"unknown conductance law {law!r}")


def _grid_index(n):
    ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return ix.ravel(), iy.ravel()


def _grid_edges(nx, ny):
    idx = np.arange(nx * ny).reshape(nx, ny)
    h = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], 1)
    v = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], 1)
    return np.concatenate([h, v])


def gen_grid(n: int, law: str = "constant", shift: bool = False, seed: int = 0) -> CellConfiguration:
    """n x n unit squares centred on integer points; optional uniform random shift."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = stream(seed, "grid")
    sample = parse_law(law)
    w = rng.random(2) if shift else np.zeros(2)
    lo = -(n // 2)
    ix, iy = _grid_index(n)
    cx = lo + ix - w[0]
    cy = lo + iy - w[1]
    edges = _grid_edges(n, n)
    cond = sample(rng, len(edges))
    window = Square(lo - 0.5 - w[0], lo - 0.5 - w[1], float(n))
    # lattice: cell corners with sides carrying the conductance of the pair they separate
    nv = n + 1
    vx, vy = np.meshgrid(np.arange(nv), np.arange(nv), indexing="ij")
    verts = np.stack([window.x + vx.ravel(), window.y + vy.ravel()], 1)
    vid = np.arange(nv * nv).reshape(nv, nv)
    ledges = np.concatenate([
        np.stack([vid[:-1, :].ravel(), vid[1:, :].ravel()], 1),
        np.stack([vid[:, :-1].ravel(), vid[:, 1:].ravel()], 1),
    ])
    lcond = sample(stream(seed, "grid-frame"), len(ledges))
    cid = np.arange(n * n).reshape(n, n)
    pair_c = {}
    for (a, b), c in zip(edges, cond):
        pair_c[(int(a), int(b))] = c
    # horizontal side at (x: i..i+1, y: j) separates cells (i, j-1) and (i, j)
    nh = n * nv
    for k in range(nh):
        i, j = divmod(k, nv)
        if 0 < j < n:
            lcond[k] = pair_c[(int(cid[i, j - 1]), int(cid[i, j]))]
    for k in range(nv * n):
        i, j = divmod(k, n)
        if 0 < i < n:
            lcond[nh + k] = pair_c[(int(cid[i - 1, j]), int(cid[i, j]))]
    cv = np.stack([vid[ix, iy], vid[ix + 1, iy], vid[ix + 1, iy + 1], vid[ix, iy + 1]], 1).ravel()
    lattice = Lattice(verts, ledges, lcond, cv)
    meta = {"generator": "grid", "seed": seed, "parameters": {"n": n, "law": law, "shift": bool(shift)}}
    return CellConfiguration.from_rects(cx - 0.5, cy - 0.5, cx + 0.5, cy + 0.5, edges, cond, window, meta, lattice)


def gen_split_grid(k: int) -> CellConfiguration:
    """Unit square: side 2^-k cells below y = 1/2, side 2^-(k+1) cells above."""
    if not 1 <= k <= 9:
        raise ValueError("split grid level must satisfy 1 <= k <= 9")
    a = 2.0 ** -k
    nbx, nby = 2 ** k, 2 ** (k - 1)
    nsx, nsy = 2 ** (k + 1), 2 ** k
    bx, by = np.meshgrid(np.arange(nbx), np.arange(nby), indexing="ij")
    sx, sy = np.meshgrid(np.arange(nsx), np.arange(nsy), indexing="ij")
    x0 = np.concatenate([bx.ravel() * a, sx.ravel() * a / 2])
    y0 = np.concatenate([by.ravel() * a, 0.5 + sy.ravel() * a / 2])
    side = np.concatenate([np.full(nbx * nby, a), np.full(nsx * nsy, a / 2)])
    nb = nbx * nby
    eb = _grid_edges(nbx, nby)
    es = _grid_edges(nsx, nsy) + nb
    top = np.arange(nbx) * nby + (nby - 1)
    small_bottom = nb + np.arange(nsx) * nsy
    ei = np.concatenate([
        np.stack([top, small_bottom[0::2]], 1),
        np.stack([top, small_bottom[1::2]], 1),
    ])
    edges = np.concatenate([eb, es, ei])
    meta = {"generator": "split_grid", "seed": None, "parameters": {"k": k}}
    return CellConfiguration.from_rects(x0, y0, x0 + side, y0 + side, edges, np.ones(len(edges)),
                                        Square(0.0, 0.0, 1.0), meta)


def gen_split_path(n: int) -> CellConfiguration:
    """One-dimensional analogue of the split grid: n cells below 1/2, 2n above, in a thin strip."""
    if n < 1:
        raise ValueError("n must be positive")
    lower = np.arange(n) * (0.5 / n)
    upper = 0.5 + np.arange(2 * n) * (0.25 / n)
    y0 = np.concatenate([lower, upper])
    y1 = np.concatenate([lower + 0.5 / n, upper + 0.25 / n])
    m = 3 * n
    edges = np.stack([np.arange(m - 1), np.arange(1, m)], 1)
    meta = {"generator": "split_path", "seed": None, "parameters": {"n": n}}
    w = 0.5 / n
    return CellConfiguration.from_rects(np.zeros(m), y0, np.full(m, w), y1, edges, np.ones(m - 1),
                                        Square(0.0, 0.0, 1.0), meta)


def _trace_rings(edge_list):
    """Chain directed unit boundary edges into closed rings, turning left first at pinch points."""
    dirs = [(1, 0), (0, 1), (-1, 0), (0, -1)]
    out_edges = {}
    for (x, y, d) in edge_list:
        out_edges[(x, y, d)] = True
    remaining = set(out_edges)
    rings = []
    while remaining:
        start = min(remaining)
        x, y, d = start
        ring = []
        cur = start
        while True:
            remaining.discard(cur)
            x, y, d = cur
            ring.append((x, y))
            nx_, ny_ = x + dirs[d][0], y + dirs[d][1]
            nxt = None
            for nd in ((d + 1) % 4, d, (d + 3) % 4):
                if (nx_, ny_, nd) in remaining or (nx_, ny_, nd) == start:
                    nxt = (nx_, ny_, nd)
                    break
            if nxt is None or nxt == start:
                break
            cur = nxt
        rings.append(np.array(ring, dtype=float))
    return rings


def gen_percolation_faces(p: float, n: int, seed: int = 0) -> CellConfiguration:
    """Faces of bond percolation on the square lattice inside an n x n window.

    Faces are the components of the window minus the open edges; two faces are
    adjacent when an open edge separates them, with one unit of conductance per
    separating edge.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    rng = stream(seed, "percolation")
    nv = n + 1
    # h[i, j]: edge (i, j)-(i+1, j); v[i, j]: edge (i, j)-(i, j+1)
    h_open = rng.random((n, nv)) < p
    v_open = rng.random((nv, n)) < p
    pid = np.arange(n * n).reshape(n, n)
    # plaquette (i, j) and (i+1, j) are separated by v[i+1, j]
    a1, b1 = pid[:-1, :].ravel(), pid[1:, :].ravel()
    s1 = v_open[1:n, :].ravel()
    a2, b2 = pid[:, :-1].ravel(), pid[:, 1:].ravel()
    s2 = h_open[:, 1:n].ravel()
    ca = np.concatenate([a1[~s1], a2[~s2]])
    cb = np.concatenate([b1[~s1], b2[~s2]])
    g = coo_matrix((np.ones(len(ca)), (ca, cb)), shape=(n * n, n * n))
    nf, label = connected_components(g, directed=False)
    # relabel faces in order of first plaquette for determinism
    first = np.full(nf, n * n)
    np.minimum.at(first, label, np.arange(n * n))
    order = np.argsort(first)
    rank = np.empty(nf, dtype=np.int64)
    rank[order] = np.arange(nf)
    label = rank[label]
    lab = label.reshape(n, n)
    # adjacency through open separating edges
    oa = np.concatenate([label[a1[s1]], label[a2[s2]]])
    ob = np.concatenate([label[b1[s1]], label[b2[s2]]])
    diff = oa != ob
    lo = np.minimum(oa[diff], ob[diff])
    hi = np.maximum(oa[diff], ob[diff])
    acc = defaultdict(float)
    for x, y in zip(lo, hi):
        acc[(int(x), int(y))] += 1.0
    keys = sorted(acc)
    edges = np.array(keys, dtype=np.int64).reshape(-1, 2)
    cond = np.array([acc[k] for k in keys], dtype=float)
    # boundary edges of each face, oriented with the face on the left
    per_face = defaultdict(list)
    for i in range(n):
        for j in range(n):
            f = lab[i, j]
            if j == 0 or lab[i, j - 1] != f:
                per_face[f].append((i, j, 0))
            if i == n - 1 or lab[i + 1, j] != f:
                per_face[f].append((i + 1, j, 1))
            if j == n - 1 or lab[i, j + 1] != f:
                per_face[f].append((i + 1, j + 1, 2))
            if i == 0 or lab[i - 1, j] != f:
                per_face[f].append((i, j + 1, 3))
    ox = -(n // 2) - 0.5
    deg = np.zeros((nv, nv), dtype=int)
    hi_, hj_ = np.nonzero(h_open)
    np.add.at(deg, (hi_, hj_), 1)
    np.add.at(deg, (hi_ + 1, hj_), 1)
    vi_, vj_ = np.nonzero(v_open)
    np.add.at(deg, (vi_, vj_), 1)
    np.add.at(deg, (vi_, vj_ + 1), 1)
    vid = np.arange(nv * nv).reshape(nv, nv)
    regions, coord_vertex = [], []
    for f in range(nf):
        rings = _trace_rings(per_face[f])
        holes = [geo.ring_signed_area(r) < 0 for r in rings]
        for r in rings:
            ri, rj = r[:, 0].astype(int), r[:, 1].astype(int)
            coord_vertex.append(np.where(deg[ri, rj] > 0, vid[ri, rj], -1))
        regions.append(Region([r + ox for r in rings], holes))
    verts = np.stack([ox + np.repeat(np.arange(nv), nv), ox + np.tile(np.arange(nv), nv)], 1).astype(float)
    ledges = np.concatenate([
        np.stack([vid[hi_, hj_], vid[hi_ + 1, hj_]], 1),
        np.stack([vid[vi_, vj_], vid[vi_, vj_ + 1]], 1),
    ]).reshape(-1, 2)
    lattice = Lattice(verts, ledges, np.ones(len(ledges)), np.concatenate(coord_vertex))
    meta = {"generator": "percolation", "seed": seed, "parameters": {"p": p, "n": n}}
    cfg = CellConfiguration.from_regions(regions, edges, cond, Square(ox, ox, float(n)), meta)
    # Region() may reverse ring order; rebuild coord_vertex against the stored coordinates
    cv = np.full(len(cfg.coords), -1, dtype=np.int64)
    key = np.rint(cfg.coords - ox).astype(np.int64)
    ok = (key >= 0).all(1) & (key < nv).all(1)
    cv[ok] = np.where(deg[key[ok, 0], key[ok, 1]] > 0, vid[key[ok, 0], key[ok, 1]], -1)
    cfg.lattice = Lattice(verts, ledges, np.ones(len(ledges)), cv)
    return cfg


def gen_long_range(N: float, law: str = "constant", n: int = 16, seed: int = 0,
                   width: float = TENTACLE_WIDTH) -> CellConfiguration:
    """Squares of side 1/2 on the integer lattice joined to every lattice point within distance N.

    Each pair is realized by two thin strips meeting at the midpoint of the
    segment, so adjacent cells touch while overlaps stay below validation tolerance.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    rng = stream(seed, "long-range")
    sample = parse_law(law)
    lo = -(n // 2)
    ix, iy = _grid_index(n)
    pts = np.stack([lo + ix, lo + iy], 1).astype(float)
    R = int(math.floor(N))
    offs = [(dx, dy) for dx in range(-R, R + 1) for dy in range(-R, R + 1)
            if (dx, dy) != (0, 0) and dx * dx + dy * dy <= N * N]
    index = {(int(i), int(j)): k for k, (i, j) in enumerate(zip(ix, iy))}
    edges = []
    regions = []
    hw = 0.5 * width
    for k, (i, j) in enumerate(zip(ix, iy)):
        x = pts[k]
        comps = [np.array([[x[0] - .25, x[1] - .25], [x[0] + .25, x[1] - .25], [x[0] + .25, x[1] + .25],
                           [x[0] - .25, x[1] + .25]])]
        for dx, dy in offs:
            other = index.get((int(i) + dx, int(j) + dy))
            if other is None:
                continue
            if other > k:
                edges.append((k, other))
            u = np.array([dx, dy], dtype=float)
            t_exit = 0.25 / max(abs(dx), abs(dy))
            a = x + t_exit * u
            b = x + 0.5 * u
            nrm = np.array([-u[1], u[0]]) / math.hypot(dx, dy)
            comps.append(np.array([a - hw * nrm, b - hw * nrm, b + hw * nrm, a + hw * nrm]))
        regions.append(Region(comps))
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
    cond = sample(rng, len(edges))
    meta = {"generator": "long_range", "seed": seed, "parameters": {"N": N, "law": law, "n": n}}
    return CellConfiguration.from_regions(regions, edges, cond, Square(lo - 0.5, lo - 0.5, float(n)), meta)


def merge_cells(config: CellConfiguration, ids) -> CellConfiguration:
    """Replace the cells ``ids`` by their union; parallel conductances are summed."""
    ids = np.unique(np.asarray(ids, dtype=np.int64))
    keep = np.setdiff1d(np.arange(config.n_cells), ids)
    new_index = np.empty(config.n_cells, dtype=np.int64)
    new_index[keep] = np.arange(len(keep))
    new_index[ids] = len(keep)
    regions = [config.region(int(i)) for i in keep]
    b = config.bbox[ids]
    box = (b[:, 0].min(), b[:, 1].min(), b[:, 2].max(), b[:, 3].max())
    total = config.area[ids].sum()
    if abs((box[2] - box[0]) * (box[3] - box[1]) - total) <= 1e-12 * total:
        merged = Region.rect(*box)
    else:
        rings, holes = [], []
        for i in ids:
            for r, h in config.cell_rings(int(i)):
                rings.append(r)
                holes.append(h)
        merged = Region(rings, holes)
    regions.append(merged)
    e = new_index[config.edges]
    keep_e = e[:, 0] != e[:, 1]
    e = np.sort(e[keep_e], axis=1)
    c = config.conductance[keep_e]
    key = e[:, 0] * (len(keep) + 1) + e[:, 1]
    uk, inv = np.unique(key, return_inverse=True)
    cs = np.zeros(len(uk))
    np.add.at(cs, inv, c)
    ue = np.stack([uk // (len(keep) + 1), uk % (len(keep) + 1)], 1)
    meta = dict(config.meta)
    meta["parameters"] = dict(meta.get("parameters", {}), merged=len(ids))
    return CellConfiguration.from_regions(regions, ue, cs, config.window, meta)


def gen_big_cell_grid(n: int, block: int, law: str = "constant", seed: int = 0) -> CellConfiguration:
    """Unit grid with one block x block square of cells, centred at the origin, merged into one cell."""
    cfg = gen_grid(n, law=law, seed=seed)
    lo = -(block // 2)
    c = cfg.centroid
    sel = np.nonzero((c[:, 0] >= lo - 1e-9) & (c[:, 0] < lo + block - 1e-9)
                     & (c[:, 1] >= lo - 1e-9) & (c[:, 1] < lo + block - 1e-9))[0]
    out = merge_cells(cfg, sel)
    out.meta.update({"generator": "big_cell_grid",
                     "parameters": {"n": n, "block": block, "law": law}})
    return out


def vertex_cells(config: CellConfiguration) -> CellConfiguration:
    """Cells around lattice vertices, by fanning every face from its centroid.

    Each face is cut along segments from its centroid to the arc-length midpoints
    between consecutive lattice vertices on its boundary; a vertex cell is the
    union of the slices around that vertex.
    """
    L = config.lattice
    if L is None:
        raise ConfigurationError("configuration carries no lattice data; vertex cells need one")
    slices = defaultdict(list)
    for f in range(config.n_cells):
        rings = config.cell_rings(f)
        if len(rings) != 1:
            raise ConfigurationError(f"face {f} is not a single simple polygon; fan subdivision needs one ring")
        ring, _ = rings[0]
        v0 = config.ring_ptr[config.cell_ptr[f]]
        cv = L.coord_vertex[v0:v0 + len(ring)]
        if geo.ring_signed_area(ring) < 0:
            ring, cv = ring[::-1], cv[::-1]
        c = config.centroid[f]
        nxt = np.roll(ring, -1, axis=0)
        if np.any(geo._orient(c[0], c[1], ring[:, 0], ring[:, 1], nxt[:, 0], nxt[:, 1]) <= 0):
            raise ConfigurationError(f"face {f} is not star-shaped from its centroid")
        lat = np.nonzero(cv >= 0)[0]
        if len(lat) == 0:
            continue
        if len(lat) == 1:
            slices[int(cv[lat[0]])].append(np.vstack([c[None, :], ring[lat[0]:], ring[:lat[0]], ring[lat[0]:lat[0] + 1]]))
            continue
        m = len(ring)
        seg = np.hypot(*(nxt - ring).T)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        perim = cum[-1]

        def point_at(s):
            s = s % perim
            k = min(int(np.searchsorted(cum, s, side="right") - 1), m - 1)
            t = (s - cum[k]) / seg[k] if seg[k] > 0 else 0.0
            return ring[k] + t * (nxt[k] - ring[k]), k

        mids = []
        for q in range(len(lat)):
            a, b = lat[q], lat[(q + 1) % len(lat)]
            sa, sb = cum[a], cum[b] if b > a else cum[b] + perim
            mids.append(point_at(0.5 * (sa + sb)))
        for q in range(len(lat)):
            (pa, ka) = mids[q - 1]
            (pb, kb) = mids[q]
            pts = [c, pa]
            k = (ka + 1) % m
            while True:
                pts.append(ring[k])
                if k == kb:
                    break
                k = (k + 1) % m
            pts.append(pb)
            poly = np.array(pts)
            slices[int(cv[lat[q]])].append(poly)
    verts = sorted(slices)
    index = {v: i for i, v in enumerate(verts)}
    regions = [Region(slices[v]) for v in verts]
    e, cnd = [], []
    for (a, b), cc in zip(L.edges, L.conductance):
        a, b = int(a), int(b)
        if a in index and b in index:
            e.append((index[a], index[b]))
            cnd.append(cc)
    meta = dict(config.meta)
    meta["generator"] = f"vertex_cells({config.meta.get('generator', 'unknown')})"
    out = CellConfiguration.from_regions(regions, np.array(e, dtype=np.int64).reshape(-1, 2), np.array(cnd),
                                         config.window, meta)
    out.vertex_position = L.vertices[verts]
    return out
