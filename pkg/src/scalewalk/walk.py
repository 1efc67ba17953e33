"""Continuous-time random walk on cells and the estimators built on it.

The walk jumps from H to a neighbour H' with probability c(H, H') / pi(H) and
holds at H for Area(H) / pi(H); the first holding time is shortened by a
uniform offset theta in [0, Area(Y_0) / pi(Y_0)] so that time 0 is a
Lebesgue-typical time of the first interval.

Vectorized estimators advance a batch of walkers in lockstep. Each batch draws
from its own counter-based stream keyed by (seed, batch index), so results do
not depend on the number of threads.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order

from .dyadic import DyadicSystem1D, DyadicSystem2D
from .environment import CellConfiguration
from .errors import ConfigurationError, WindowTooSmall
from .geometry import Square, TimedCurve
from .harmonic import Embedding, dirichlet_energy, solve_dirichlet
from .rng import stream

BATCH = 1024


class Stepper:
    """Vectorized jump sampler: row r's transition CDF is stored as r + cdf in one sorted key array."""

    def __init__(self, config: CellConfiguration):
        A = config.adjacency
        if A.nnz and not np.all(A.data > 0):
            raise ConfigurationError("walk needs positive conductances")
        self.config = config
        self.indptr = A.indptr
        self.indices = A.indices
        rows = np.repeat(np.arange(config.n_cells), np.diff(A.indptr))
        pi = config.pi
        cs = np.cumsum(A.data)
        row_start = np.concatenate([[0.0], cs])[A.indptr[:-1]]
        cdf = (cs - row_start[rows]) / pi[rows]
        last = A.indptr[1:] - 1
        has = np.diff(A.indptr) > 0
        cdf[last[has]] = 1.0
        self.key = rows + cdf
        self.isolated = ~has
        with np.errstate(divide="ignore"):
            self.hold = config.area / pi

    def step(self, cur: np.ndarray, u: np.ndarray) -> np.ndarray:
        if self.isolated[cur].any():
            raise ConfigurationError("walk reached a cell without neighbours")
        k = np.searchsorted(self.key, cur + u, side="right")
        return self.indices[k]


def _stepper(config: CellConfiguration) -> Stepper:
    st = config.__dict__.get("_stepper")
    if st is None:
        st = Stepper(config)
        config.__dict__["_stepper"] = st
    return st


@dataclass
class WalkTrace:
    """Cells Y_0..Y_n and times tau_0..tau_n; Y_j is occupied on [tau_j, tau_(j+1))."""

    cells: np.ndarray
    jump_times: np.ndarray
    theta: float
    hit_boundary: bool = False
    horizon: float = math.inf  # jumps before this time are all recorded

    @property
    def n_jumps(self) -> int:
        return len(self.cells) - 1

    def jumps_until(self, T: float) -> int:
        """n_T: number of jumps at times <= T."""
        return int(np.searchsorted(self.jump_times[1:], T, side="right"))


def _start_cell(config: CellConfiguration, start) -> int:
    if np.ndim(start) == 0:
        return int(start)
    h = int(config.locate(np.asarray(start, dtype=float)[None, :])[0])
    if h < 0:
        raise WindowTooSmall(f"start point {tuple(start)} lies in no cell")
    return h


def _run_batch(config, start_cell, n, horizon, n_steps, rng, stop_on_boundary, stop_mask=None):
    st = _stepper(config)
    frame = config.frame
    cur = np.full(n, start_cell, dtype=np.int64)
    h0 = st.hold[start_cell]
    theta = rng.random(n) * h0
    t_next = -theta + h0
    cells = [cur.copy()]
    times = [-theta]
    active = np.ones(n, dtype=bool)
    hit = np.zeros(n, dtype=bool)
    stop = frame if stop_on_boundary else np.zeros(config.n_cells, dtype=bool)
    if stop_mask is not None:
        stop = stop | stop_mask
    active &= ~stop[cur]
    steps = 0
    while active.any():
        if n_steps is not None and steps >= n_steps:
            break
        if horizon is not None:
            active &= t_next <= horizon
            if not active.any():
                break
        act = np.nonzero(active)[0]
        nxt = st.step(cur[act], rng.random(len(act)))
        row = np.full(n, -1, dtype=np.int64)
        row[act] = nxt
        tr = np.full(n, np.nan)
        tr[act] = t_next[act]
        cur[act] = nxt
        t_next[act] += st.hold[nxt]
        cells.append(row)
        times.append(tr)
        s = stop[nxt]
        hit[act[s]] = True
        active[act[s]] = False
        steps += 1
    C = np.array(cells)
    Tm = np.array(times)
    out = []
    for w in range(n):
        col = C[:, w]
        m = int(np.sum(col >= 0))
        out.append(WalkTrace(col[:m].copy(), Tm[:m, w].copy(), float(theta[w]), bool(hit[w]), float(t_next[w])))
    return out


def run_walks(config: CellConfiguration, start, n_walks: int, horizon: float | None = None, n_steps: int | None = None,
              seed: int = 0, stop_on_boundary: bool = True, tag: str = "walk") -> list:
    if horizon is None and n_steps is None and not stop_on_boundary:
        raise ValueError("walk needs a horizon, a step budget or a stopping set")
    h = _start_cell(config, start)
    out = []
    for b, lo in enumerate(range(0, n_walks, BATCH)):
        n = min(BATCH, n_walks - lo)
        out.extend(_run_batch(config, h, n, horizon, n_steps, stream(seed, tag, b), stop_on_boundary))
    return out


def run_walk(config: CellConfiguration, start, horizon: float | None = None, n_steps: int | None = None, seed: int = 0,
             stop_on_boundary: bool = True, index: int = 0) -> WalkTrace:
    h = _start_cell(config, start)
    return _run_batch(config, h, 1, horizon, n_steps, stream(seed, "single-walk", index), stop_on_boundary)[0]


def step(config: CellConfiguration, cell: int, rng: np.random.Generator) -> int:
    return int(_stepper(config).step(np.array([cell]), rng.random(1))[0])


def embed_walk(config: CellConfiguration, trace: WalkTrace, emb: Embedding | None = None, seed: int = 0) -> TimedCurve:
    """Curve through emb(Y_j) at times tau_j, or through uniform points of each cell when emb is None."""
    if emb is not None:
        pts = np.asarray(emb.values)[trace.cells]
    else:
        pts = uniform_points_in_cells(config, trace.cells, stream(seed, "embed"))
    if len(trace.cells) == 1:
        return TimedCurve([trace.jump_times[0], trace.jump_times[0] + 1.0], np.vstack([pts, pts]))
    return TimedCurve(trace.jump_times, pts)


def uniform_points_in_cells(config: CellConfiguration, cells, rng) -> np.ndarray:
    from .geometry import points_in_region

    cells = np.asarray(cells)
    b = config.bbox[cells]
    u = rng.random((len(cells), 2))
    pts = b[:, :2] + u * (b[:, 2:] - b[:, :2])
    for j in np.nonzero(~config.is_rect[cells])[0]:
        reg = config.region(int(cells[j]))
        bb = b[j]
        while not points_in_region(pts[j][None, :], reg)[0]:
            pts[j] = bb[:2] + rng.random(2) * (bb[2:] - bb[:2])
    return pts


def quadratic_variation(trace: WalkTrace, emb, v, T: float, S: float = 0.0) -> float:
    """Sum of (v . Δphi)^2 over jumps at times in (S, T]."""
    if T >= trace.horizon:
        raise ValueError(f"T = {T:g} is beyond the recorded horizon {trace.horizon:g}")
    phi = emb.values if isinstance(emb, Embedding) else np.asarray(emb)
    v = np.asarray(v, dtype=float)
    t = trace.jump_times[1:]
    sel = (t > S) & (t <= T)
    d = (phi[trace.cells[1:]] - phi[trace.cells[:-1]]) @ v
    return float((d[sel] ** 2).sum())


# ----------------------------------------------------------------------
# covariance


@dataclass
class SigmaEstimate:
    c_10: float
    c_01: float
    c_diag: float
    rho: float
    stderr: dict
    sigma: np.ndarray | None
    n_used: int
    n_discarded: int
    flags: list = field(default_factory=list)


def _sigma_batch(config, phi, start_cell, n, T, rng):
    st = _stepper(config)
    frame = config.frame
    cur = np.full(n, start_cell, dtype=np.int64)
    h0 = st.hold[start_cell]
    t_next = -rng.random(n) * h0 + h0
    acc = np.zeros((n, 3))
    bad = np.zeros(n, dtype=bool)
    act = np.nonzero(t_next <= T)[0]
    r2 = 1.0 / math.sqrt(2.0)
    while len(act):
        c = cur[act]
        nxt = st.step(c, rng.random(len(act)))
        d = phi[nxt] - phi[c]
        acc[act, 0] += d[:, 0] ** 2
        acc[act, 1] += d[:, 1] ** 2
        acc[act, 2] += (r2 * (d[:, 0] + d[:, 1])) ** 2
        cur[act] = nxt
        t_next[act] += st.hold[nxt]
        bad[act[frame[nxt]]] = True
        keep = (t_next[act] <= T) & ~frame[nxt]
        act = act[keep]
    return acc / T, bad


def estimate_sigma(config: CellConfiguration, emb, n_walks: int, T: float, seed: int = 0, start=(0.0, 0.0),
                   threads: int = 1) -> SigmaEstimate:
    """Quadratic-variation rates along (1,0), (0,1) and (1,1)/sqrt 2, and the covariance they determine.

    Walks that reach the frozen frame before T are discarded. The matrix is
    withheld (``sigma`` is None) when a directional rate is within two
    standard errors of zero.
    """
    phi = np.asarray(emb.values if isinstance(emb, Embedding) else emb, dtype=float)
    h = _start_cell(config, start)
    _stepper(config)
    _ = config.frame
    batches = [(b, lo, min(BATCH, n_walks - lo)) for b, lo in enumerate(range(0, n_walks, BATCH))]

    def job(item):
        b, lo, n = item
        return _sigma_batch(config, phi, h, n, T, stream(seed, "sigma", b))

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            res = list(ex.map(job, batches))
    else:
        res = [job(x) for x in batches]
    vals = np.concatenate([r[0] for r in res])
    bad = np.concatenate([r[1] for r in res])
    flags = []
    frac = bad.mean() if len(bad) else 0.0
    if frac > 0.10:
        msg = f"{frac:.1%} of walks reached the window frame before T; enlarge the window"
        warnings.warn(msg)
        flags.append(msg)
    good = vals[~bad]
    if len(good) < 2:
        raise WindowTooSmall("fewer than two walks stayed inside the window")
    rho_i = good[:, 2] - 0.5 * good[:, 0] - 0.5 * good[:, 1]
    m = good.mean(0)
    n = len(good)
    se = good.std(0, ddof=1) / math.sqrt(n)
    rho = float(rho_i.mean())
    se_rho = float(rho_i.std(ddof=1) / math.sqrt(n))
    stderr = {"c_10": float(se[0]), "c_01": float(se[1]), "c_diag": float(se[2]), "rho": se_rho}
    sigma = np.array([[m[0], rho], [rho, m[1]]])
    for name, val, s in (("c_10", m[0], se[0]), ("c_01", m[1], se[1]), ("c_diag", m[2], se[2])):
        if abs(val) <= 2 * s or val == 0.0:
            flags.append(f"{name} = {val:.3g} is within two standard errors of 0; covariance not assembled")
            sigma = None
    return SigmaEstimate(float(m[0]), float(m[1]), float(m[2]), rho, stderr, sigma, n, int(bad.sum()), flags)


def jump_truncation_stats(config: CellConfiguration, emb, trace: WalkTrace, v, delta: float, T: float) -> tuple:
    """(T^-1 sum of large squared jumps, T^-1 sum of their one-step compensators) up to time T.

    A jump counts as large when |v . Δphi| >= delta sqrt(T).
    """
    if T >= trace.horizon:
        raise ValueError(f"T = {T:g} is beyond the recorded horizon {trace.horizon:g}")
    phi = np.asarray(emb.values if isinstance(emb, Embedding) else emb, dtype=float)
    v = np.asarray(v, dtype=float)
    r = delta * math.sqrt(T)
    comp = _compensator(config, phi, v, r)
    n = trace.jumps_until(T)
    d = (phi[trace.cells[1:n + 1]] - phi[trace.cells[:n]]) @ v
    big = np.abs(d) >= r
    return float((d[big] ** 2).sum() / T), float(comp[trace.cells[:n]].sum() / T)


def _compensator(config, phi, v, r):
    A = config.adjacency
    rows = np.repeat(np.arange(config.n_cells), np.diff(A.indptr))
    d = (phi[A.indices] - phi[rows]) @ v
    w = A.data * d * d * (np.abs(d) >= r)
    out = np.zeros(config.n_cells)
    np.add.at(out, rows, w)
    return out / config.pi


# ----------------------------------------------------------------------
# loop erasure and exit laws


def loop_erase(path) -> list:
    """Chronological loop erasure."""
    out = []
    pos = {}
    for x in path:
        if x in pos:
            k = pos[x]
            for y in out[k + 1:]:
                del pos[y]
            del out[k + 1:]
        else:
            pos[x] = len(out)
            out.append(x)
    return out


def _hit_batch(config, start_cell, n, target_mask, rng, record_visits):
    st = _stepper(config)
    cur = np.full(n, start_cell, dtype=np.int64)
    visited = np.zeros((n, config.n_cells), dtype=bool) if record_visits else None
    if record_visits:
        visited[:, start_cell] = True
    act = np.arange(n) if not target_mask[start_cell] else np.zeros(0, dtype=np.int64)
    while len(act):
        nxt = st.step(cur[act], rng.random(len(act)))
        cur[act] = nxt
        if record_visits:
            visited[act, nxt] = True
        act = act[~target_mask[nxt]]
    return cur, visited


def _disconnected(adj, visited_row, y, target_mask) -> bool:
    if visited_row[y]:
        return True
    # the target itself is never removed by the trace
    keep = ~visited_row | target_mask
    D = sp.diags(keep.astype(float))
    sub = (D @ adj @ D).tocsr()
    sub.eliminate_zeros()
    order = breadth_first_order(sub, y, directed=False, return_predecessors=False)
    return not target_mask[order].any()


@dataclass
class CouplingEstimate:
    tv: float
    tv_se: float
    disconnect_prob: float
    disconnect_se: float

    @property
    def slack(self) -> float:
        """(1 - P(disconnect)) - TV; negative values contradict the coupling bound."""
        return (1.0 - self.disconnect_prob) - self.tv


def exit_coupling_tv(config: CellConfiguration, x: int, y: int, target, n_samples: int, seed: int = 0) -> CouplingEstimate:
    """Empirical TV between hitting distributions of ``target`` from x and y, and the disconnection probability.

    A sample disconnects when the walk from x, run until it hits the target,
    visits y or leaves y with no target-reaching path that avoids its trace.
    """
    tmask = np.zeros(config.n_cells, dtype=bool)
    tmask[target] = True
    if tmask[x] or tmask[y]:
        raise ValueError("x and y must lie outside the target set")
    adj = config.adjacency
    hx, hy, disc = [], [], []
    bs = max(1, min(BATCH, int(2 ** 26 // max(config.n_cells, 1))))
    for b, lo in enumerate(range(0, n_samples, bs)):
        n = min(bs, n_samples - lo)
        ex, vis = _hit_batch(config, x, n, tmask, stream(seed, "coupling-x", b), True)
        ey, _ = _hit_batch(config, y, n, tmask, stream(seed, "coupling-y", b), False)
        hx.append(ex)
        hy.append(ey)
        disc.extend(_disconnected(adj, vis[i], y, tmask) for i in range(n))
    hx = np.concatenate(hx)
    hy = np.concatenate(hy)
    disc = np.array(disc, dtype=float)
    tv = _empirical_tv(hx, hy)
    rng = stream(seed, "coupling-bootstrap")
    boots = [_empirical_tv(hx[rng.integers(0, len(hx), len(hx))], hy[rng.integers(0, len(hy), len(hy))])
             for _ in range(50)]
    p = float(disc.mean())
    return CouplingEstimate(tv, float(np.std(boots, ddof=1)), p, math.sqrt(max(p * (1 - p), 0.0) / len(disc)))


def _empirical_tv(a, b) -> float:
    u, inv = np.unique(np.concatenate([a, b]), return_inverse=True)
    ca = np.bincount(inv[:len(a)], minlength=len(u)) / len(a)
    cb = np.bincount(inv[len(a):], minlength=len(u)) / len(b)
    return 0.5 * float(np.abs(ca - cb).sum())


def walk_exit_points(config: CellConfiguration, start, box: Square, n_samples: int, seed: int = 0) -> np.ndarray:
    """Points where the centroid-interpolated walk first leaves the open box."""
    st = _stepper(config)
    h = _start_cell(config, start)
    c = config.centroid
    x0, y0, x1, y1 = box.bounds
    frame = config.frame

    def outside(p):
        return (p[:, 0] <= x0) | (p[:, 0] >= x1) | (p[:, 1] <= y0) | (p[:, 1] >= y1)

    if outside(c[h][None, :])[0]:
        raise ValueError("start cell centroid lies outside the box")
    out = np.empty((n_samples, 2))
    for b, lo in enumerate(range(0, n_samples, BATCH)):
        n = min(BATCH, n_samples - lo)
        rng = stream(seed, "exit-walk", b)
        cur = np.full(n, h, dtype=np.int64)
        act = np.arange(n)
        res = np.empty((n, 2))
        while len(act):
            nxt = st.step(cur[act], rng.random(len(act)))
            if frame[nxt].any():
                raise WindowTooSmall("walk reached the window frame before leaving the box; enlarge the window")
            p = c[cur[act]]
            q = c[nxt]
            o = outside(q)
            if o.any():
                pp, qq = p[o], q[o]
                d = qq - pp
                with np.errstate(divide="ignore", invalid="ignore"):
                    tx = np.where(d[:, 0] > 0, (x1 - pp[:, 0]) / d[:, 0], np.where(d[:, 0] < 0, (x0 - pp[:, 0]) / d[:, 0], np.inf))
                    ty = np.where(d[:, 1] > 0, (y1 - pp[:, 1]) / d[:, 1], np.where(d[:, 1] < 0, (y0 - pp[:, 1]) / d[:, 1], np.inf))
                t = np.clip(np.minimum(tx, ty), 0.0, 1.0)
                res[act[o]] = pp + t[:, None] * d
            cur[act] = nxt
            act = act[~o]
        out[lo:lo + n] = res
    return out


def brownian_exit_points(start, box: Square, sigma, n_samples: int, seed: int = 0, eps: float | None = None) -> np.ndarray:
    """Exit points from the box of Brownian motion with covariance ``sigma``.

    Sampled by walk-on-spheres after the linear change of variables that makes
    the motion standard; a sample stops within ``eps`` (default side/512) of the
    boundary and is projected onto it.
    """
    S = np.asarray(sigma, dtype=float)
    w, V = np.linalg.eigh(S)
    if np.any(w <= 0):
        raise ValueError("covariance must be positive definite")
    root = V @ np.diag(np.sqrt(w)) @ V.T
    inv = V @ np.diag(1.0 / np.sqrt(w)) @ V.T
    corners = box.corners() @ inv.T
    a = corners
    b = np.roll(corners, -1, axis=0)
    d = b - a
    ln = np.hypot(d[:, 0], d[:, 1])
    nrm = np.stack([-d[:, 1], d[:, 0]], 1) / ln[:, None]
    if eps is None:
        eps = box.side / 512.0
    eps_y = eps / math.sqrt(w.max())
    rng = stream(seed, "exit-bm")
    y = np.tile(np.asarray(start, dtype=float) @ inv.T, (n_samples, 1))
    done = np.zeros(n_samples, dtype=bool)
    for _ in range(100000):
        act = np.nonzero(~done)[0]
        if not len(act):
            break
        p = y[act]
        dist = ((p[:, None, :] - a[None, :, :]) * nrm[None, :, :]).sum(-1)
        r = dist.min(1)
        stop = r < eps_y
        if stop.any():
            j = dist[stop].argmin(1)
            q = p[stop] - dist[stop, j][:, None] * nrm[j]
            # clamp onto the edge segment
            t = np.clip(((q - a[j]) * d[j]).sum(1) / (ln[j] ** 2), 0.0, 1.0)
            y[act[stop]] = a[j] + t[:, None] * d[j]
            done[act[stop]] = True
        go = act[~stop]
        if len(go):
            th = 2 * math.pi * rng.random(len(go))
            y[go] += r[~stop][:, None] * np.stack([np.cos(th), np.sin(th)], 1)
    return y @ root.T


@dataclass
class ExitLawReport:
    distance: float
    walk_points: np.ndarray
    reference_points: np.ndarray


def exit_law_prokhorov(config: CellConfiguration, start, square: Square, sigma, n_samples: int, seed: int = 0,
                       tol: float = 1e-4, reference_seed: int | None = None) -> ExitLawReport:
    """Prokhorov distance between walk and Brownian exit laws from the triple square, in units of the square side."""
    from .analysis import EmpiricalMeasure, prokhorov_distance

    big = square.enlarged(3.0)
    s = square.side
    c = np.array(square.center)
    wp = walk_exit_points(config, start, big, n_samples, seed)
    z = config.centroid[_start_cell(config, start)] if np.ndim(start) == 0 else np.asarray(start, dtype=float)
    rs = seed if reference_seed is None else reference_seed
    unit = Square(-1.5, -1.5, 3.0)
    bp = brownian_exit_points((z - c) / s, unit, sigma, n_samples, rs)
    wn = (wp - c) / s
    dist = prokhorov_distance(EmpiricalMeasure.from_points(wn), EmpiricalMeasure.from_points(bp), tol=tol)
    return ExitLawReport(dist, wn, bp)


def hitting_probability(config: CellConfiguration, start, first, other, n_walks: int, seed: int = 0) -> tuple:
    """Monte Carlo P(walk from start reaches ``first`` before ``other``) with its standard error."""
    a = np.zeros(config.n_cells, dtype=bool)
    b = np.zeros(config.n_cells, dtype=bool)
    a[first] = True
    b[other] = True
    if (a & b).any():
        raise ValueError("target sets overlap")
    h = _start_cell(config, start)
    hits = 0
    for bi, lo in enumerate(range(0, n_walks, BATCH)):
        n = min(BATCH, n_walks - lo)
        end, _ = _hit_batch(config, h, n, a | b, stream(seed, "hitting", bi), False)
        hits += int(a[end].sum())
    p = hits / n_walks
    return p, math.sqrt(p * (1 - p) / n_walks)


def exact_hitting_probability(config: CellConfiguration, start, first, other, tol: float = 1e-12) -> float:
    """The same probability from the discrete Dirichlet problem (1 on ``first``, 0 on ``other``)."""
    bmask = np.zeros(config.n_cells, dtype=bool)
    vals = np.zeros(config.n_cells)
    bmask[first] = True
    bmask[other] = True
    vals[first] = 1.0
    emb = solve_dirichlet(config, bmask, vals, tol=tol)
    return float(emb.values[_start_cell(config, start)])


# ----------------------------------------------------------------------
# recurrence and returns


@dataclass
class RecurrenceRow:
    r: int
    energy: float
    continuum: float
    resistance_lower: float
    resistance: float | None


def recurrence_test_function(config: CellConfiguration, center, inner: float, outer: float) -> np.ndarray:
    """0 on cells meeting the inner disk, 1 on cells meeting the outer circle or beyond, log-interpolated between."""
    c = config.centroid
    rr = np.hypot(c[:, 0] - center[0], c[:, 1] - center[1])
    with np.errstate(divide="ignore"):
        g = (np.log(np.maximum(rr, 1e-300)) - math.log(inner)) / math.log(outer / inner)
    f = np.clip(g, 0.0, 1.0)
    inside_outer = np.zeros(config.n_cells, dtype=bool)
    inside_outer[config.cells_meeting_disk(center, outer)] = True
    b = config.bbox
    far = np.maximum(np.hypot(np.maximum(np.abs(b[:, 0] - center[0]), np.abs(b[:, 2] - center[0])),
                              np.maximum(np.abs(b[:, 1] - center[1]), np.abs(b[:, 3] - center[1]))), 0)
    f[~inside_outer] = 1.0
    # cells meeting the outer circle: some point at distance >= outer
    f[inside_outer & (far >= outer)] = 1.0
    f[config.cells_meeting_disk(center, inner)] = 0.0
    return f


def recurrence_resistance(config: CellConfiguration, d: DyadicSystem2D, r_max: int, k: int = 0, r_min: int = 2,
                          harmonic: bool = False, tol: float = 1e-10) -> list:
    """Energy of the log test function between radii 2|S_k| and 2^r |S_k| around the centre of S_k."""
    sq = d.origin_square(k)
    center = sq.center
    rows = []
    for r in range(r_min, r_max + 1):
        inner = 2.0 * sq.side
        outer = 2.0 ** r * sq.side
        near = config.cells_meeting_disk(center, outer + 2 * float(config.diameter.max()))
        if config.frame[near].any():
            raise WindowTooSmall(f"radius {outer:g} around {center} reaches the window frame")
        f = recurrence_test_function(config, center, inner, outer)
        e = dirichlet_energy(config, f)
        cont = 2 * math.pi / ((r - 1) * math.log(2))
        res = None
        if harmonic:
            bmask = (f == 0.0) | (f == 1.0)
            sol = solve_dirichlet(config, bmask, np.where(f >= 1.0, 1.0, 0.0), tol=tol)
            res = 1.0 / dirichlet_energy(config, sol.values)
        rows.append(RecurrenceRow(r, e, cont, 1.0 / e, res))
    return rows


@dataclass
class ReturnStats:
    fraction_returned: float
    median_steps: float
    censored: int
    n: int


def return_time_stats(config: CellConfiguration, start, n_excursions: int, step_cap: int, seed: int = 0) -> ReturnStats:
    """Steps until the walk from ``start`` first comes back, censored at ``step_cap``."""
    st = _stepper(config)
    h = _start_cell(config, start)
    steps = np.full(n_excursions, -1, dtype=np.int64)
    for b, lo in enumerate(range(0, n_excursions, BATCH)):
        n = min(BATCH, n_excursions - lo)
        rng = stream(seed, "returns", b)
        cur = np.full(n, h, dtype=np.int64)
        act = np.arange(n)
        res = np.full(n, -1, dtype=np.int64)
        for s in range(1, step_cap + 1):
            if not len(act):
                break
            cur[act] = st.step(cur[act], rng.random(len(act)))
            back = cur[act] == h
            res[act[back]] = s
            act = act[~back]
        steps[lo:lo + n] = res
    ok = steps >= 0
    med = float(np.median(steps[ok])) if ok.any() else math.nan
    return ReturnStats(float(ok.mean()) if n_excursions else 0.0, med, int((~ok).sum()), n_excursions)


# ----------------------------------------------------------------------
# two-sided walks and time averages


@dataclass
class TwoSidedTrace:
    """Cells in time order; cell i occupies [times[i], times[i+1]). ``zero`` is the index of Y_0."""

    cells: np.ndarray
    times: np.ndarray
    zero: int


def run_two_sided_walk(config: CellConfiguration, start, horizon: float, seed: int = 0, index: int = 0) -> TwoSidedTrace:
    """Forward walk on [0, horizon] glued at time 0 to an independent backward walk covering [-horizon, 0]."""
    st = _stepper(config)
    fwd = run_walk(config, start, horizon=horizon, seed=seed, stop_on_boundary=True, index=2 * index)
    bwd = run_walk(config, start, horizon=horizon, seed=seed, stop_on_boundary=True, index=2 * index + 1)
    if fwd.hit_boundary or bwd.hit_boundary:
        raise WindowTooSmall("two-sided walk reached the window frame")
    fc = fwd.cells
    ft = fwd.jump_times
    end = ft[-1] + st.hold[fc[-1]]
    back_cells = bwd.cells[1:][::-1]
    hb = st.hold[back_cells]
    back_starts = ft[0] - np.cumsum(hb[::-1])[::-1]
    cells = np.concatenate([back_cells, fc])
    times = np.concatenate([back_starts, ft, [end]])
    return TwoSidedTrace(cells, times, len(back_cells))


def _fractional_count(times, lo, hi) -> float:
    a, b = times[:-1], times[1:]
    ov = np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0, None)
    return float((ov / (b - a)).sum())


def mass_interval(d1: DyadicSystem1D, trace: TwoSidedTrace, a: float) -> tuple[float, float]:
    """Largest dyadic interval containing 0 that covers at most ``a`` holding intervals (fractionally)."""
    span = (trace.times[0], trace.times[-1])
    k = int(math.ceil(math.log2(max(span[1] - span[0], 1e-300)) - d1.s)) + 1
    I = d1.containing_interval(0.0, k)
    if _fractional_count(trace.times, *I) <= a:
        raise WindowTooSmall("trace too short for this mass level")
    while True:
        k -= 1
        I = d1.containing_interval(0.0, k)
        if _fractional_count(trace.times, *I) <= a:
            if I[0] < span[0] or I[1] > span[1]:
                raise WindowTooSmall("mass interval leaves the simulated time span")
            return I


def walk_ergodic_average(config: CellConfiguration, d1: DyadicSystem1D, trace: TwoSidedTrace, functional, a_levels) -> list:
    """Time averages of a per-interval functional over the mass intervals for each level a.

    ``functional(config, trace)`` returns one value per occupied interval.
    """
    vals = np.asarray(functional(config, trace), dtype=float)
    out = []
    for a in a_levels:
        lo, hi = mass_interval(d1, trace, a)
        t = trace.times
        ov = np.clip(np.minimum(t[1:], hi) - np.maximum(t[:-1], lo), 0, None)
        used = ov > 0
        if np.any(~np.isfinite(vals[used])):
            raise WindowTooSmall("functional undefined on part of the averaging interval")
        out.append((float(a), (lo, hi), float((vals[used] * ov[used]).sum() / (hi - lo))))
    return out


def jump_rate_functional(emb, v):
    """F = (pi / Area) (v . Δphi)^2 with Δphi the increment of the next jump."""
    phi = np.asarray(emb.values if isinstance(emb, Embedding) else emb, dtype=float)
    v = np.asarray(v, dtype=float)

    def f(config, trace):
        c = trace.cells
        out = np.full(len(c), np.nan)
        d = (phi[c[1:]] - phi[c[:-1]]) @ v
        out[:-1] = config.pi[c[:-1]] / config.area[c[:-1]] * d * d
        return out

    return f
