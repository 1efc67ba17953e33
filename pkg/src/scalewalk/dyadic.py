"""Uniform dyadic systems, mass squares and partitions.

A system is fixed by a log-side ``s`` in [0, 1), an offset ``w`` and a seed:
the level-0 square is [0, 2^s]^2 - w and each level-k square is one of the
four dyadic parents of the level-(k-1) square, chosen by a counter-based
stream indexed by k. Level-k squares tile the plane as the lattice
S_k + 2^(s+k) Z^2, which is all that containment queries need.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .environment import CellConfiguration
from .errors import WindowTooSmall
from .geometry import Square
from .rng import stream, stream_key

MAX_LEVEL = 500


def _choice(seed: int, k: int, tag: str, mod: int) -> int:
    return int(stream_key(seed, tag, k)[0] % mod)


class DyadicSystem2D:
    def __init__(self, s: float, w, seed: int = 0):
        if not 0.0 <= s <= 1.0:
            raise ValueError("s must lie in [0, 1]")
        self.s = float(s)
        self.w = (float(w[0]), float(w[1]))
        self.seed = int(seed)
        self._anchor = {0: (-self.w[0], -self.w[1])}

    def __repr__(self):
        return f"DyadicSystem2D(s={self.s:.6g}, w=({self.w[0]:.6g}, {self.w[1]:.6g}), seed={self.seed})"

    def _check(self, k: int):
        if abs(self.s + k) > MAX_LEVEL:
            raise ValueError(f"level {k} outside supported range |s + k| <= {MAX_LEVEL}")

    def side(self, k: int) -> float:
        self._check(k)
        # ldexp keeps side(k) / side(k - 1) exactly 2
        return math.ldexp(2.0 ** self.s, k)

    def parent_choice(self, k: int) -> int:
        """Which quadrant of S_k holds S_(k-1) (bit 0: right half, bit 1: upper half)."""
        return _choice(self.seed, k, "dyadic2", 4)

    def anchor(self, k: int) -> tuple[float, float]:
        self._check(k)
        if k in self._anchor:
            return self._anchor[k]
        if k > 0:
            x, y = self.anchor(k - 1)
            q = self.parent_choice(k)
            h = self.side(k - 1)
            a = (x - h * (q & 1), y - h * (q >> 1))
        else:
            x, y = self.anchor(k + 1)
            h = self.side(k)
            a = (x + h * (0.0 - x >= h), y + h * (0.0 - y >= h))
        self._anchor[k] = a
        return a

    def origin_square(self, k: int) -> Square:
        x, y = self.anchor(k)
        return Square(x, y, self.side(k))

    def lattice_index(self, z, k: int) -> tuple[int, int]:
        x, y = self.anchor(k)
        h = self.side(k)
        return (int(math.floor((z[0] - x) / h)), int(math.floor((z[1] - y) / h)))

    def square_at(self, k: int, i: int, j: int) -> Square:
        x, y = self.anchor(k)
        h = self.side(k)
        return Square(x + i * h, y + j * h, h)

    def containing_square(self, z, k: int) -> Square:
        """Level-k square containing z; squares are half-open [a, a + l)^2."""
        i, j = self.lattice_index(z, k)
        return self.square_at(k, i, j)

    def transformed(self, scale: float, shift) -> "TransformedDyadic":
        return TransformedDyadic(self, scale, shift)


class TransformedDyadic:
    """The system scale * (D - shift)."""

    def __init__(self, base: DyadicSystem2D, scale: float, shift):
        self.base = base
        self.scale = float(scale)
        self.shift = (float(shift[0]), float(shift[1]))

    def containing_square_unit_level(self, z) -> Square:
        """Square of the transformed system containing z whose log2-side lies in [0, 1)."""
        k = int(math.floor(-math.log2(self.scale) - self.base.s)) + 1
        while self.scale * self.base.side(k) >= 1.0:
            k -= 1
        while self.scale * self.base.side(k) < 1.0:
            k += 1
        zb = (z[0] / self.scale + self.shift[0], z[1] / self.scale + self.shift[1])
        sq = self.base.containing_square(zb, k)
        return Square(self.scale * (sq.x - self.shift[0]), self.scale * (sq.y - self.shift[1]), self.scale * sq.side)


class DyadicSystem1D:
    def __init__(self, s: float, w: float, seed: int = 0):
        if not 0.0 <= s <= 1.0:
            raise ValueError("s must lie in [0, 1]")
        self.s = float(s)
        self.w = float(w)
        self.seed = int(seed)
        self._anchor = {0: -self.w}

    def side(self, k: int) -> float:
        if abs(self.s + k) > MAX_LEVEL:
            raise ValueError(f"level {k} outside supported range")
        return math.ldexp(2.0 ** self.s, k)

    def anchor(self, k: int) -> float:
        if k in self._anchor:
            return self._anchor[k]
        if k > 0:
            a = self.anchor(k - 1) - self.side(k - 1) * _choice(self.seed, k, "dyadic1", 2)
        else:
            x = self.anchor(k + 1)
            h = self.side(k)
            a = x + h * (0.0 - x >= h)
        self._anchor[k] = a
        return a

    def interval(self, k: int) -> tuple[float, float]:
        a = self.anchor(k)
        return (a, a + self.side(k))

    def containing_interval(self, t: float, k: int) -> tuple[float, float]:
        a = self.anchor(k)
        h = self.side(k)
        i = math.floor((t - a) / h)
        return (a + i * h, a + (i + 1) * h)


def sample_uniform_2d(seed: int) -> DyadicSystem2D:
    u = stream(seed, "dyadic2-init").random(3)
    s = float(u[0])
    side = 2.0 ** s
    return DyadicSystem2D(s, (side * u[1], side * u[2]), seed)


def sample_uniform_1d(seed: int) -> DyadicSystem1D:
    u = stream(seed, "dyadic1-init").random(2)
    s = float(u[0])
    return DyadicSystem1D(s, (2.0 ** s) * u[1], seed)


# ----------------------------------------------------------------------
# mass squares


def square_mass(config: CellConfiguration, sq: Square, candidates=None) -> float:
    """Sum over cells meeting sq of Area(H ∩ sq) / Area(H)."""
    idx = config._bbox_candidates(sq.bounds, candidates)
    if len(idx) == 0:
        return 0.0
    return float((config.box_overlap_area(sq, idx) / config.area[idx]).sum())


def default_min_level(config: CellConfiguration, d: DyadicSystem2D) -> int:
    h = math.sqrt(float(config.area.min()))
    return int(math.floor(math.log2(h / 4.0) - d.s))


def _top_level(config: CellConfiguration, d: DyadicSystem2D) -> int:
    return int(math.ceil(math.log2(2.0 * config.window.side) - d.s))


@dataclass
class PartitionSquare:
    square: Square
    level: int
    mass: float
    floor: bool = False


def mass_square(config: CellConfiguration, d: DyadicSystem2D, z, m: float, k_min: int | None = None,
                strict: bool = True) -> PartitionSquare:
    """Largest dyadic square containing z whose cell mass is at most m.

    If every square down to level ``k_min`` is too heavy, the level-``k_min``
    square is returned with ``floor=True``.
    """
    if k_min is None:
        k_min = default_min_level(config, d)
    k = _top_level(config, d)
    sq = d.containing_square(z, k)
    mass = square_mass(config, sq)
    if mass <= m:
        raise WindowTooSmall(f"mass {mass:.6g} of the level-{k} square is already <= {m}; enlarge the window")
    cand = config._bbox_candidates(sq.bounds)
    while k > k_min:
        k -= 1
        sq = d.containing_square(z, k)
        cand = config._bbox_candidates(sq.bounds, cand)
        mass = square_mass(config, sq, cand)
        if mass <= m:
            if strict and not sq.inside(config.window, tol=1e-12 * config.window.side):
                raise WindowTooSmall(f"mass square {sq} leaves the window {config.window}")
            return PartitionSquare(sq, k, mass)
    return PartitionSquare(sq, k, mass, floor=True)


def partition(config: CellConfiguration, d: DyadicSystem2D, m: float, region: Square,
              k_min: int | None = None, strict: bool = True) -> list[PartitionSquare]:
    """Maximal mass-m squares meeting the interior of ``region`` (they cover it, interiors disjoint)."""
    if k_min is None:
        k_min = default_min_level(config, d)
    k = _top_level(config, d)
    h = d.side(k)
    x0, y0, x1, y1 = region.bounds
    i0, j0 = d.lattice_index((x0, y0), k)
    i1, j1 = d.lattice_index((x1, y1), k)
    out = []
    tol = 1e-12 * config.window.side

    def meets_interior(sq):
        a = sq.bounds
        return a[0] < x1 and a[2] > x0 and a[1] < y1 and a[3] > y0

    stack = []
    for i in range(i0, i1 + 1):
        for j in range(j0, j1 + 1):
            sq = d.square_at(k, i, j)
            if not meets_interior(sq):
                continue
            cand = config._bbox_candidates(sq.bounds)
            mass = square_mass(config, sq, cand)
            if mass <= m:
                raise WindowTooSmall(f"level-{k} square {sq} has mass {mass:.6g} <= {m}; enlarge the window")
            stack.append((k, sq, cand))
    while stack:
        k, sq, cand = stack.pop()
        hk = 0.5 * sq.side
        for qx in (0, 1):
            for qy in (0, 1):
                ch = Square(sq.x + qx * hk, sq.y + qy * hk, hk)
                if not meets_interior(ch):
                    continue
                c2 = config._bbox_candidates(ch.bounds, cand)
                mass = square_mass(config, ch, c2)
                if mass <= m or k - 1 <= k_min:
                    if strict and not ch.inside(config.window, tol=tol):
                        raise WindowTooSmall(f"mass square {ch} leaves the window {config.window}")
                    out.append(PartitionSquare(ch, k - 1, mass, floor=mass > m))
                else:
                    stack.append((k - 1, ch, c2))
    out.sort(key=lambda p: (-p.level, p.square.x, p.square.y))
    return out


# ----------------------------------------------------------------------
# ergodic averages and mass transport


def cell_functional(values):
    """Wrap a per-cell array as a point functional z -> values[H_z]."""
    values = np.asarray(values, dtype=float)

    def f(config, d, pts):
        idx = config.locate(pts)
        if np.any(idx < 0):
            raise WindowTooSmall("sample point outside every cell")
        return values[idx]

    return f


def ergodic_average(config: CellConfiguration, d: DyadicSystem2D, functional, k: int, n_samples: int,
                    seed: int = 0) -> tuple[float, float]:
    """Mean and standard error of functional(config, d, z) for z uniform in the origin square S_k."""
    sq = d.origin_square(k)
    u = stream(seed, "ergodic", k).random((n_samples, 2))
    pts = np.stack([sq.x + sq.side * u[:, 0], sq.y + sq.side * u[:, 1]], 1)
    vals = np.asarray(functional(config, d, pts), dtype=float)
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("nan")
    return float(vals.mean()), se


@dataclass
class TransportRule:
    """Translation-covariant transport F(env, w0, w1), vectorized over point pairs.

    ``exact_out(env)`` / ``exact_in(env)`` may return the integrals over w of
    F(env, 0, w) and F(env, w, 0) in closed form.
    """

    name: str
    weight: object
    exact_out: object = None
    exact_in: object = None


@dataclass
class BalanceReport:
    out_mean: float
    in_mean: float
    out_se: float
    in_se: float
    z_score: float
    n_envs: int
    n_points: int
    exact: bool = False
    meta: dict = field(default_factory=dict)


def identity_rule() -> TransportRule:
    def weight(cfg, w0, w1):
        h0 = cfg.locate(w0)
        h1 = cfg.locate(w1)
        return np.where((h0 == h1) & (h0 >= 0), 1.0 / cfg.area[np.maximum(h0, 0)], 0.0)

    return TransportRule("identity", weight, exact_out=lambda cfg: 1.0, exact_in=lambda cfg: 1.0)


def directional_neighbor(config: CellConfiguration, direction) -> np.ndarray:
    """For each cell, the neighbour furthest along ``direction`` (-1 if none lies ahead)."""
    u = np.asarray(direction, dtype=float)
    A = config.adjacency
    rows = np.repeat(np.arange(config.n_cells), np.diff(A.indptr))
    c = config.centroid
    score = (c[A.indices] - c[rows]) @ u
    out = np.full(config.n_cells, -1, dtype=np.int64)
    best = np.full(config.n_cells, 0.0)
    order = np.lexsort((A.indices, -score))
    for k in order:
        r = rows[k]
        if out[r] < 0 and score[k] > 1e-12:
            out[r] = A.indices[k]
            best[r] = score[k]
    return out


def neighbor_rule(direction=(1.0, 0.0), normalized: bool = True) -> TransportRule:
    """Send the mass of H_w0 uniformly onto its neighbour ahead in ``direction``.

    With ``normalized=False`` the 1/Area factor is dropped, which breaks the
    covariance under dilations.
    """
    cache = {}

    def weight(cfg, w0, w1):
        key = id(cfg)
        if key not in cache:
            cache.clear()
            cache[key] = directional_neighbor(cfg, direction)
        nb = cache[key]
        h0 = cfg.locate(w0)
        h1 = cfg.locate(w1)
        tgt = np.where(h0 >= 0, nb[np.maximum(h0, 0)], -1)
        hit = (tgt >= 0) & (tgt == h1)
        if not normalized:
            return hit.astype(float)
        return np.where(hit, 1.0 / cfg.area[np.maximum(tgt, 0)], 0.0)

    return TransportRule(f"neighbor{tuple(direction)}{'' if normalized else '-unnormalized'}", weight)


def mass_transport_check(config_sampler, rule: TransportRule, n_envs: int, n_points: int, radius: float,
                         seed: int = 0, use_exact: bool = True) -> BalanceReport:
    """Compare E ∫F(env, 0, w) dw with E ∫F(env, w, 0) dw over fresh environments.

    ``config_sampler(rng)`` returns an environment seen from a typical point at
    the origin. The integrals are Monte Carlo over w uniform in B_radius(0)
    unless the rule supplies closed forms.
    """
    outs, ins = [], []
    exact = use_exact and rule.exact_out is not None and rule.exact_in is not None
    vol = math.pi * radius * radius
    zero = np.zeros((n_points, 2))
    for e in range(n_envs):
        rng = stream(seed, "transport-env", e)
        cfg = config_sampler(rng)
        if exact:
            outs.append(float(rule.exact_out(cfg)))
            ins.append(float(rule.exact_in(cfg)))
            continue
        u = stream(seed, "transport-pts", e).random((n_points, 2))
        r = radius * np.sqrt(u[:, 0])
        th = 2 * math.pi * u[:, 1]
        w = np.stack([r * np.cos(th), r * np.sin(th)], 1)
        outs.append(vol * float(np.mean(rule.weight(cfg, zero, w))))
        ins.append(vol * float(np.mean(rule.weight(cfg, w, zero))))
    outs = np.array(outs)
    ins = np.array(ins)
    n = len(outs)
    diff = outs - ins
    se_d = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    if se_d == 0.0:
        z = 0.0 if np.all(diff == 0) else math.copysign(math.inf, diff.mean())
    else:
        z = float(diff.mean() / se_d)
    se = lambda a: float(a.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return BalanceReport(float(outs.mean()), float(ins.mean()), se(outs), se(ins), z, n_envs, n_points, exact,
                         {"rule": rule.name})


def shifted_grid_sampler(n: int = 16, law: str = "constant"):
    """Unit grid with a uniform random shift."""
    from .generators import gen_grid

    def sample(rng):
        seed = int(rng.integers(2 ** 62))
        return gen_grid(n, law=law, shift=True, seed=seed)

    return sample


def typical_point_sampler(config: CellConfiguration, normalize_area: bool = True):
    """Recentre a fixed finite configuration at a Lebesgue-uniform point of its window.

    With ``normalize_area`` the result is dilated so the cell at the origin has
    unit area, the usual normalization for environments defined modulo scaling.
    """
    w = config.window

    def sample(rng):
        z = np.array([w.x, w.y]) + w.side * rng.random(2)
        h = int(config.locate(z[None, :])[0])
        scale = 1.0 / math.sqrt(config.area[h]) if normalize_area else 1.0
        return config.transformed(scale, z)

    return sample
