"""Distances between empirical measures, uniformity tests and report writers."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import maximum_flow
from scipy.spatial import cKDTree
from scipy.stats import ks_2samp

from .environment import atomic_write_text

# scipy's max-flow runs on int32 capacities
_FLOW_CAP = 2 ** 30


@dataclass
class EmpiricalMeasure:
    """Finitely supported probability measure on the plane.

    ``counts`` is kept when the measure comes from samples so that flow
    feasibility can be decided in exact integer arithmetic.
    """

    points: np.ndarray
    weights: np.ndarray
    counts: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.points) != len(self.weights):
            raise ValueError("points and weights differ in length")
        if len(self.weights) == 0:
            raise ValueError("empty measure")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")

    @classmethod
    def from_points(cls, pts, resolution: float | None = None) -> "EmpiricalMeasure":
        """Uniform measure on samples; repeated points (after optional snapping to ``resolution``) are merged."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        if resolution:
            pts = np.round(pts / resolution) * resolution
        u, c = np.unique(pts, axis=0, return_counts=True)
        return cls(u, c / c.sum(), c)

    @property
    def n_atoms(self) -> int:
        return len(self.weights)


def _capacities(mu: EmpiricalMeasure, nu: EmpiricalMeasure):
    if mu.counts is not None and nu.counts is not None:
        na, nb = int(mu.counts.sum()), int(nu.counts.sum())
        L = math.lcm(na, nb)
        if L <= _FLOW_CAP:
            return mu.counts.astype(np.int64) * (L // na), nu.counts.astype(np.int64) * (L // nb), L
    # rounding error in the flow value is at most (atoms of mu + atoms of nu) / Q
    Q = _FLOW_CAP // 2
    a = np.maximum(np.round(mu.weights * Q), 1).astype(np.int64)
    b = np.maximum(np.round(nu.weights * Q), 1).astype(np.int64)
    return a, b, Q


def max_transport(mu: EmpiricalMeasure, nu: EmpiricalMeasure, eps: float) -> float:
    """Largest mass of mu that can be moved into nu along moves of length <= eps."""
    a, b, total = _capacities(mu, nu)
    na, nb = len(a), len(b)
    tree_b = cKDTree(nu.points)
    pairs = cKDTree(mu.points).query_ball_tree(tree_b, eps * (1 + 1e-12) + 1e-15)
    ii = np.repeat(np.arange(na), [len(p) for p in pairs])
    if not len(ii):
        return 0.0
    jj = np.concatenate([np.asarray(p, dtype=np.int64) for p in pairs])
    src, sink = na + nb, na + nb + 1
    rows = np.concatenate([np.full(na, src), ii, na + np.arange(nb)])
    cols = np.concatenate([np.arange(na), na + jj, np.full(nb, sink)])
    cap = np.concatenate([a, np.full(len(ii), min(a.sum(), b.sum())), b])
    g = sp.csr_matrix((cap.astype(np.int32), (rows, cols)), shape=(na + nb + 2, na + nb + 2))
    return maximum_flow(g, src, sink, method="dinic").flow_value / total


def prokhorov_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure, tol: float = 1e-6) -> float:
    """Smallest eps (to ``tol``, by bisection) with mu(A) <= nu(A^eps) + eps for every A.

    By Strassen's theorem the condition is equivalent to a transport of mass
    at least 1 - eps along moves of length <= eps, which is a max-flow problem
    on the bipartite eps-neighbourhood graph. The condition is symmetric in
    mu and nu because the neighbourhood graph is.
    """
    if mu.n_atoms == nu.n_atoms and np.array_equal(mu.points, nu.points) and np.allclose(mu.weights, nu.weights, rtol=0, atol=1e-15):
        return 0.0
    lo, hi = 0.0, 1.0
    if max_transport(mu, nu, 0.0) >= 1.0 - 1e-15:
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if max_transport(mu, nu, mid) >= 1.0 - mid - 1e-12:
            hi = mid
        else:
            lo = mid
    return hi


def ks_uniform(samples) -> float:
    """Kolmogorov-Smirnov gap between the empirical CDF and the uniform CDF on [0, 1)."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n == 0:
        raise ValueError("no samples")
    i = np.arange(1, n + 1)
    return float(max((i / n - x).max(), (x - (i - 1) / n).max()))


def ks_two_sample(a, b) -> float:
    return float(ks_2samp(np.asarray(a, dtype=float), np.asarray(b, dtype=float)).statistic)


def batch_means(values, n_batches: int = 20) -> tuple[float, float]:
    """Mean and batch-means standard error of a sequence."""
    v = np.asarray(values, dtype=float)
    n_batches = max(2, min(n_batches, len(v)))
    chunks = np.array_split(v, n_batches)
    m = np.array([c.mean() for c in chunks])
    return float(v.mean()), float(m.std(ddof=1) / math.sqrt(n_batches))


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(fmt(x) for x in r) + "\n")
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    """One header row, reals at 17 significant digits, LF line ends, atomic replace."""
    atomic_write_text(path, csv_text(header, rows))


# ----------------------------------------------------------------------
# SVG

_DEFAULT_STYLE = {
    "cell_fill": "#dde6f0",
    "cell_stroke": "#34495e",
    "stroke_width": 0.02,
    "curve_stroke": "#c0392b",
    "square_stroke": "#27ae60",
    "size": 800,
}


def _n(x: float) -> str:
    return format(float(x), ".6g")


def render_svg(config=None, embedding=None, curves=(), squares=(), style: dict | None = None) -> str:
    """Deterministic SVG of cells, an embedded graph, polylines and squares.

    With ``embedding`` set, cells are not drawn; instead each edge is drawn
    between the embedded positions of its endpoints.
    """
    st = dict(_DEFAULT_STYLE)
    st.update(style or {})
    boxes = []
    if config is not None and embedding is None and config.n_cells:
        b = config.bbox
        boxes.append((b[:, 0].min(), b[:, 1].min(), b[:, 2].max(), b[:, 3].max()))
    if embedding is not None:
        v = np.asarray(getattr(embedding, "values", embedding), dtype=float)
        if len(v):
            boxes.append((v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max()))
    for c in curves:
        p = np.asarray(getattr(c, "points", c), dtype=float).reshape(-1, 2)
        if len(p):
            boxes.append((p[:, 0].min(), p[:, 1].min(), p[:, 0].max(), p[:, 1].max()))
    for s in squares:
        boxes.append(s.bounds)
    if boxes:
        bb = np.array(boxes)
        x0, y0, x1, y1 = bb[:, 0].min(), bb[:, 1].min(), bb[:, 2].max(), bb[:, 3].max()
    else:
        x0 = y0 = 0.0
        x1 = y1 = 1.0
    w = max(x1 - x0, 1e-12)
    h = max(y1 - y0, 1e-12)
    sw = st["stroke_width"] * max(w, h) / 100.0
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{st["size"]}" height="{_n(st["size"] * h / w)}" '
        f'viewBox="{_n(x0)} {_n(-y1)} {_n(w)} {_n(h)}">',
        '<g transform="scale(1,-1)">',
    ]
    if config is not None and embedding is None:
        out.append(f'<g fill="{st["cell_fill"]}" stroke="{st["cell_stroke"]}" stroke-width="{_n(sw)}" fill-rule="evenodd">')
        for i in range(config.n_cells):
            d = []
            for ring, _ in config.cell_rings(i):
                d.append("M" + " L".join(f"{_n(x)},{_n(y)}" for x, y in ring) + " Z")
            out.append(f'<path d="{" ".join(d)}"/>')
        out.append("</g>")
    if embedding is not None and config is not None:
        out.append(f'<g stroke="{st["cell_stroke"]}" stroke-width="{_n(sw)}">')
        for a, b in config.edges:
            out.append(f'<line x1="{_n(v[a, 0])}" y1="{_n(v[a, 1])}" x2="{_n(v[b, 0])}" y2="{_n(v[b, 1])}"/>')
        out.append("</g>")
    for s in squares:
        out.append(f'<rect x="{_n(s.x)}" y="{_n(s.y)}" width="{_n(s.side)}" height="{_n(s.side)}" fill="none" '
                   f'stroke="{st["square_stroke"]}" stroke-width="{_n(2 * sw)}"/>')
    for c in curves:
        p = np.asarray(getattr(c, "points", c), dtype=float).reshape(-1, 2)
        pts = " ".join(f"{_n(x)},{_n(y)}" for x, y in p)
        out.append(f'<polyline points="{pts}" fill="none" stroke="{st["curve_stroke"]}" stroke-width="{_n(2 * sw)}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, *args, **kwargs) -> None:
    atomic_write_text(path, render_svg(*args, **kwargs))
