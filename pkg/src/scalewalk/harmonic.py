"""Discrete harmonic embeddings, Dirichlet energies and their diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .dyadic import DyadicSystem2D, PartitionSquare, partition
from .environment import CellConfiguration, atomic_write_text, dumps_json
from .errors import SolverError, WindowTooSmall
from .geometry import Region, Square


@dataclass
class Embedding:
    values: np.ndarray
    label: str
    residual: float = 0.0
    meta: dict = field(default_factory=dict)

    def __getitem__(self, i):
        return self.values[i]


@dataclass
class EnergyReport:
    masses: list
    increment_energies: list
    total_energy: float
    sum_increments: float
    relative_gap: float
    inner_products: np.ndarray
    max_relative_inner: float


def phi0(config: CellConfiguration) -> Embedding:
    return Embedding(config.centroid.copy(), "phi0")


def dirichlet_energy(config: CellConfiguration, f, box=None) -> float:
    """Sum over edges of c |f(a) - f(b)|^2, optionally over edges with both ends meeting ``box``."""
    f = f.values if isinstance(f, Embedding) else np.asarray(f, dtype=float)
    e = config.edges
    c = config.conductance
    if box is not None:
        mask = np.zeros(config.n_cells, dtype=bool)
        mask[config.cells_meeting_box(box)] = True
        keep = mask[e[:, 0]] & mask[e[:, 1]]
        e, c = e[keep], c[keep]
    d = f[e[:, 0]] - f[e[:, 1]]
    if d.ndim == 1:
        return float((c * d * d).sum())
    return float((c[:, None] * d * d).sum())


def dirichlet_form(config: CellConfiguration, f, g) -> float:
    f = f.values if isinstance(f, Embedding) else np.asarray(f, dtype=float)
    g = g.values if isinstance(g, Embedding) else np.asarray(g, dtype=float)
    e = config.edges
    df = f[e[:, 0]] - f[e[:, 1]]
    dg = g[e[:, 0]] - g[e[:, 1]]
    c = config.conductance if df.ndim == 1 else config.conductance[:, None]
    return float((c * df * dg).sum())


def laplacian(config: CellConfiguration) -> sp.csr_matrix:
    if not np.all(config.conductance > 0):
        raise SolverError("conductances must be positive")
    A = config.adjacency
    return (sp.diags(config.pi) - A).tocsr()


def pcg(A, b, diag, tol, max_iter, scale):
    """Jacobi-preconditioned conjugate gradients on several right-hand sides.

    Stops when max |r_i| / diag_i <= tol * scale, i.e. every interior value is
    within tol * scale of its conductance-weighted neighbour average.
    """
    x = np.zeros_like(b)
    r = b.copy()
    inv = (1.0 / diag)[:, None]
    z = inv * r
    p = z.copy()
    rz = (r * z).sum(0)
    it = 0
    target = tol * scale
    res = np.abs(z).max() if z.size else 0.0
    while res > target and it < max_iter:
        Ap = A @ p
        pAp = (p * Ap).sum(0)
        alpha = np.where(pAp > 0, rz / np.where(pAp > 0, pAp, 1.0), 0.0)
        x += alpha * p
        r -= alpha * Ap
        z = inv * r
        rz_new = (r * z).sum(0)
        beta = np.where(rz > 0, rz_new / np.where(rz > 0, rz, 1.0), 0.0)
        p = z + beta * p
        rz = rz_new
        it += 1
        if it % 50 == 0:
            # recompute the true residual to avoid drift
            r = b - A @ x
            z = inv * r
            rz = (r * z).sum(0)
        res = np.abs(z).max()
    return x, float(res), it


def solve_dirichlet(config: CellConfiguration, boundary, values, tol: float = 1e-10, max_iter: int | None = None,
                    domain=None) -> Embedding:
    """Harmonic extension of ``values`` from the boundary cells.

    ``boundary`` is a boolean mask or index array; ``values`` holds the
    boundary data for every cell (rows (n,) or (n, k)), only boundary rows
    are read. Cells outside ``domain`` (default: all) are left as given.
    """
    n = config.n_cells
    bmask = np.zeros(n, dtype=bool)
    bmask[boundary] = True
    dom = np.ones(n, dtype=bool)
    if domain is not None:
        dom = np.zeros(n, dtype=bool)
        dom[domain] = True
    vals = np.asarray(values, dtype=float)
    squeeze = vals.ndim == 1
    V = vals.reshape(n, -1).copy()
    interior = dom & ~bmask
    idx = np.nonzero(interior)[0]
    if max_iter is None:
        max_iter = 50 * max(n, 1)
    if len(idx) == 0:
        return Embedding(V[:, 0] if squeeze else V, "dirichlet", 0.0)
    L = laplacian(config)
    A = config.adjacency
    Lii = L[idx][:, idx].tocsr()
    rest = np.nonzero(~interior)[0]
    Wib = A[idx][:, rest]
    if domain is not None:
        outside = ~dom[rest] & ~bmask[rest]
        if Wib[:, np.nonzero(outside)[0]].nnz:
            raise SolverError("interior cells have neighbours outside the domain that are not boundary cells")
    # every interior component must touch the boundary
    ncomp, lab = connected_components(Lii, directed=False)
    touches = np.zeros(ncomp, dtype=bool)
    has_b = np.asarray(Wib.sum(axis=1)).ravel() > 0
    touches[lab[has_b]] = True
    if not touches.all():
        raise SolverError(f"{int((~touches).sum())} interior component(s) carry no boundary data")
    bvals = V[rest]
    scale = float(np.abs(bvals).max()) if bvals.size else 1.0
    scale = scale if scale > 0 else 1.0
    # solve on unit-size data so tiny or huge values neither underflow nor overflow
    rhs = Wib @ (bvals / scale)
    diag = config.pi[idx]
    x, res, it = pcg(Lii, rhs, diag, tol, max_iter, 1.0)
    if res > tol:
        raise SolverError(f"CG did not converge: relative residual {res:.3g} after {it} iterations")
    V[idx] = x * scale
    out = V[:, 0] if squeeze else V
    return Embedding(out, "dirichlet", res, {"iterations": it})


def _interior_of_squares(config: CellConfiguration, squares) -> np.ndarray:
    """Cells contained in the open interior of one of the squares."""
    inter = np.zeros(config.n_cells, dtype=bool)
    for ps in squares:
        sq = ps.square if isinstance(ps, PartitionSquare) else ps
        x0, y0, x1, y1 = sq.bounds
        idx = config._bbox_candidates(sq.bounds)
        b = config.bbox[idx]
        strict = (b[:, 0] > x0) & (b[:, 2] < x1) & (b[:, 1] > y0) & (b[:, 3] < y1)
        inter[idx[strict]] = True
    return inter


def phi_m(config: CellConfiguration, d: DyadicSystem2D, m: float, region: Square, tol: float = 1e-10,
          strict: bool = True, squares=None) -> Embedding:
    """phi0 on cells meeting a mass-m square boundary (and elsewhere), harmonic inside each square."""
    if squares is None:
        squares = partition(config, d, m, region, strict=strict)
    base = config.centroid
    interior = _interior_of_squares(config, squares) & ~config.frame
    if not interior.any():
        emb = Embedding(base.copy(), f"phi_{m:g}")
    else:
        emb = solve_dirichlet(config, ~interior, base, tol=tol)
        emb.label = f"phi_{m:g}"
    emb.meta.update({"m": m, "squares": squares, "interior": interior})
    return emb


def energy_decomposition(config: CellConfiguration, d: DyadicSystem2D, region: Square, masses,
                         tol: float = 1e-10, strict: bool = True) -> EnergyReport:
    """Split Energy(phi_M - phi0) into increments along an increasing mass ladder.

    ``masses`` is the ladder m_1 < m_2 < ... (m_0 = 0 means phi0 itself).
    """
    masses = list(masses)
    if any(b <= a for a, b in zip(masses, masses[1:])):
        raise ValueError("mass ladder must be strictly increasing")
    fields = [config.centroid.copy()]
    for m in masses:
        fields.append(phi_m(config, d, m, region, tol=tol, strict=strict).values)
    incs = [fields[j + 1] - fields[j] for j in range(len(masses))]
    en = [dirichlet_energy(config, g) for g in incs]
    total = dirichlet_energy(config, fields[-1] - fields[0])
    k = len(incs)
    ip = np.zeros((k, k))
    worst = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            ip[i, j] = ip[j, i] = dirichlet_form(config, incs[i], incs[j])
            gm = math.sqrt(en[i] * en[j])
            if gm > 0:
                worst = max(worst, abs(ip[i, j]) / gm)
            elif abs(ip[i, j]) > 0:
                worst = math.inf
    s = float(sum(en))
    gap = abs(total - s) / total if total > 0 else abs(total - s)
    return EnergyReport(masses, en, total, s, gap, ip, worst)


def ladder(m1: float, j_max: int) -> list:
    """Geometric mass ladder m1 * 2^j, j = 0..j_max."""
    return [m1 * 2.0 ** j for j in range(j_max + 1)]


@dataclass
class SpecificEnergyReport:
    integral: float
    energy: float
    mean: float
    relative_gap: float


def specific_energy(config: CellConfiguration, f, g, squares) -> SpecificEnergyReport:
    """Integral over the squares of the specific energy of f - g, against the direct energy.

    At z in a square S the specific energy is sum over neighbours H' of H_z in
    H(S) of c |Δ|^2 / (2 Area(H_z ∩ S)); its integral over S is then compared
    with the energy of f - g on the edges inside H(S).
    """
    f = f.values if isinstance(f, Embedding) else np.asarray(f, dtype=float)
    g = g.values if isinstance(g, Embedding) else np.asarray(g, dtype=float)
    h = f - g
    if h.ndim == 1:
        h = h[:, None]
    A = config.adjacency
    integral = 0.0
    direct = 0.0
    area = 0.0
    for ps in squares:
        sq = ps.square if isinstance(ps, PartitionSquare) else ps
        idx = config.cells_meeting_box(sq)
        inside = np.zeros(config.n_cells, dtype=bool)
        inside[idx] = True
        overlap = config.box_overlap_area(sq, idx)
        sub = A[idx][:, idx].tocoo()
        dd = ((h[idx[sub.row]] - h[idx[sub.col]]) ** 2).sum(1)
        per_cell = np.zeros(len(idx))
        np.add.at(per_cell, sub.row, sub.data * dd)
        pos = overlap > 0
        dens = np.zeros(len(idx))
        dens[pos] = per_cell[pos] / (2.0 * overlap[pos])
        integral += float((overlap * dens).sum())
        e = config.edges
        both = inside[e[:, 0]] & inside[e[:, 1]]
        de = ((h[e[both, 0]] - h[e[both, 1]]) ** 2).sum(1)
        direct += float((config.conductance[both] * de).sum())
        area += sq.side ** 2
    gap = abs(integral - direct) / direct if direct > 0 else abs(integral - direct)
    return SpecificEnergyReport(integral, direct, integral / area if area else 0.0, gap)


def corrector_approx(config: CellConfiguration, region: Square, d: DyadicSystem2D | None = None, M: float | None = None,
                     tol: float = 1e-10, strict: bool = True):
    """Approximate the harmonic corrector on ``region``.

    Without ``d`` (or ``M``) this is one Dirichlet solve with phi0 data on the
    cells meeting the region boundary. With both, it is phi_M and the tail proxy
    is the mean specific energy of phi_M - phi_{M/2} over the region.
    Returns ``(embedding, tail_proxy)``; the proxy is None for the single solve.
    """
    if d is None or M is None:
        inter = _interior_of_squares(config, [region]) & ~config.frame
        emb = solve_dirichlet(config, ~inter, config.centroid, tol=tol)
        emb.label = "corrector"
        return emb, None
    big = phi_m(config, d, M, region, tol=tol, strict=strict)
    half = phi_m(config, d, M / 2.0, region, tol=tol, strict=strict)
    proxy = dirichlet_energy(config, big.values - half.values, region) / region.side ** 2
    big.label = f"corrector_M{M:g}"
    return big, proxy


def sublinearity_profile(config: CellConfiguration, emb, radii, center=(0.0, 0.0)) -> list:
    """(r, sup over cells meeting B_r of |emb - phi0| / r) for each radius."""
    v = emb.values if isinstance(emb, Embedding) else np.asarray(emb)
    dev = np.hypot(*(v - config.centroid).T)
    out = []
    for r in radii:
        idx = config.cells_meeting_disk(center, r)
        out.append((float(r), float(dev[idx].max() / r) if len(idx) else 0.0))
    return out


@dataclass
class PathVariation:
    lhs: float
    rhs: float
    constant: float
    bound: float


def path_variation_check(config: CellConfiguration, f, box: Square, n_lines: int = 64,
                         horizontal: bool = True) -> PathVariation:
    """Average over parallel lines of the variation of f along the cells each line meets.

    ``lhs`` is the midpoint-rule average of sum |Δf| over edges among cells met
    by the line; ``rhs`` is Energy(f on H(box))^(1/2); ``bound`` is the
    geometric constant 2 (sum diam^2 pi* / side^2)^(1/2) that must dominate lhs/rhs.
    """
    v = f.values if isinstance(f, Embedding) else np.asarray(f, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    x0, y0, x1, y1 = box.bounds
    L = box.side
    inbox = config.cells_meeting_box(box)
    total = 0.0
    e = config.edges
    for k in range(n_lines):
        t = (k + 0.5) / n_lines
        if horizontal:
            p, q = (x0, y0 + t * L), (x1, y0 + t * L)
        else:
            p, q = (x0 + t * L, y0), (x0 + t * L, y1)
        idx = config.cells_meeting_segment(p, q, candidates=inbox)
        mask = np.zeros(config.n_cells, dtype=bool)
        mask[idx] = True
        both = mask[e[:, 0]] & mask[e[:, 1]]
        total += float(np.sqrt(((v[e[both, 0]] - v[e[both, 1]]) ** 2).sum(1)).sum())
    lhs = total / n_lines
    rhs = math.sqrt(dirichlet_energy(config, v, box))
    bound = 2.0 * math.sqrt(float((config.diameter[inbox] ** 2 * config.pi_star[inbox]).sum()) / L ** 2)
    return PathVariation(lhs, rhs, lhs / rhs if rhs > 0 else math.inf, bound)


def _nearest_on_polyline(pts, line):
    a = line
    b = np.roll(line, -1, axis=0)
    d = b - a
    dd = (d * d).sum(1)
    best = np.empty_like(pts)
    for i, p in enumerate(pts):
        t = np.clip(((p - a) * d).sum(1) / dd, 0, 1)
        c = a + t[:, None] * d
        j = int(np.argmin(((c - p) ** 2).sum(1)))
        best[i] = c[j]
    return best


def harmonic_extension_compare(config: CellConfiguration, domain: Region, f_true, scales, sigma=None,
                               tol: float = 1e-10, boundary_point: str = "curve") -> list:
    """Discrete harmonic extension on dilated copies of ``domain`` against a harmonic f.

    For each scale eps the cells meeting eps^-1 * domain are used; boundary cells
    (meeting the dilated boundary) take f(eps z) with z the nearest boundary
    point to the centroid (``boundary_point="curve"``) or the centroid itself
    (``"centroid"``). Returns ``(eps, sup error)`` pairs, errors measured at
    centroids. Only isotropic covariance is supported.
    """
    if sigma is not None:
        s = np.asarray(sigma, dtype=float)
        if abs(s[0, 1]) > 1e-12 * abs(s[0, 0]) or abs(s[0, 0] - s[1, 1]) > 1e-12 * abs(s[0, 0]):
            raise ValueError("anisotropic covariance: pre-transform the domain so that it becomes a multiple of I")
    if len(domain.rings) != 1:
        raise ValueError("domain must be a single polygon")
    ring = domain.rings[0]
    out = []
    for eps in scales:
        big = ring / eps
        lo, hi = big.min(0), big.max(0)
        cand = config._bbox_candidates((lo[0], lo[1], hi[0], hi[1]))
        reg = Region([big])
        c = config.centroid
        inside = np.zeros(config.n_cells, dtype=bool)
        from .geometry import points_in_region

        inside[cand] = points_in_region(c[cand], reg)
        onb = np.zeros(config.n_cells, dtype=bool)
        onb[config.cells_meeting_polyline(big, closed=True)] = True
        member = inside | onb
        bd = onb | (~member)
        if np.any(member & config.frame):
            raise WindowTooSmall(f"window too small for scale {eps}")
        vals = np.zeros(config.n_cells)
        bidx = np.nonzero(onb)[0]
        if boundary_point == "curve":
            z = _nearest_on_polyline(c[bidx], big)
        elif boundary_point == "centroid":
            z = c[bidx]
        else:
            raise ValueError("boundary_point must be 'curve' or 'centroid'")
        vals[bidx] = f_true(eps * z)
        dom = np.nonzero(member)[0]
        sol = solve_dirichlet(config, bd, vals, tol=tol, domain=dom).values
        err = np.abs(sol[dom] - f_true(eps * c[dom]))
        out.append((float(eps), float(err.max())))
    return out


def save_embedding(emb: Embedding, path) -> None:
    v = emb.values
    if v.ndim == 1:
        v = v[:, None]
    data = {"label": emb.label, "residual": float(emb.residual),
            "values": {str(i): list(map(float, row)) for i, row in enumerate(v)}}
    atomic_write_text(path, dumps_json(data) + "\n")


def load_embedding(path) -> Embedding:
    import json

    with open(path) as fh:
        d = json.load(fh)
    n = len(d["values"])
    vals = np.array([d["values"][str(i)] for i in range(n)], dtype=float)
    if vals.shape[1] == 1:
        vals = vals[:, 0]
    return Embedding(vals, d.get("label", ""), float(d.get("residual", 0.0)))
