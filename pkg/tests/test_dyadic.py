import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scalewalk.analysis import ks_uniform
from scalewalk.dyadic import (
    DyadicSystem1D,
    DyadicSystem2D,
    cell_functional,
    ergodic_average,
    identity_rule,
    mass_square,
    mass_transport_check,
    neighbor_rule,
    partition,
    sample_uniform_1d,
    sample_uniform_2d,
    shifted_grid_sampler,
    square_mass,
)
from scalewalk.errors import WindowTooSmall
from scalewalk.generators import gen_grid
from scalewalk.geometry import Square


def test_determinism_and_doubling():
    a, b = sample_uniform_2d(11), sample_uniform_2d(11)
    for k in range(-5, 21):
        assert a.origin_square(k) == b.origin_square(k)
        assert a.side(k) / a.side(k - 1) == 2.0


@pytest.mark.parametrize("seed", range(5))
def test_nesting_and_origin(seed):
    d = sample_uniform_2d(seed)
    for k in range(-10, 30):
        big, small = d.origin_square(k), d.origin_square(k - 1)
        assert small.inside(big, tol=1e-12 * big.side)
        assert big.contains(np.zeros((1, 2)), half_open=True)[0]
        # S_(k-1) is one of the four children of S_k
        h = small.side
        ox, oy = (small.x - big.x) / h, (small.y - big.y) / h
        assert min(abs(ox), abs(ox - 1)) < 1e-9 and min(abs(oy), abs(oy - 1)) < 1e-9


def test_forced_unit_system():
    d = DyadicSystem2D(0.0, (0.0, 0.0))
    assert d.origin_square(0) == Square(0.0, 0.0, 1.0)


def test_level_range_guard():
    d = sample_uniform_2d(0)
    with pytest.raises(ValueError):
        d.side(600)


def test_containing_square():
    d = sample_uniform_2d(3)
    for k in (-2, 0, 3):
        assert d.containing_square((0.0, 0.0), k) == d.origin_square(k)
    sq = d.containing_square((5.3, -2.1), 2)
    z2 = (sq.x + 0.01, sq.y + 0.99 * sq.side)
    assert d.containing_square(z2, 2) == sq
    assert d.containing_square((5.3, -2.1), 1).inside(sq)


def test_children_and_parent_are_on_the_lattice():
    d = sample_uniform_2d(8)
    for k in range(0, 8):
        S = d.origin_square(k)
        q = d.parent_choice(k + 1)
        P = d.origin_square(k + 1)
        assert (S.x - P.x, S.y - P.y) == pytest.approx((S.side * (q & 1), S.side * (q >> 1)), abs=1e-12 * P.side)


def test_one_dimensional_nesting():
    d = sample_uniform_1d(4)
    for k in range(-5, 20):
        a0, a1 = d.interval(k)
        b0, b1 = d.interval(k - 1)
        tol = 1e-12 * (a1 - a0)
        assert a0 <= b0 + tol and b1 <= a1 + tol and a0 <= 0.0 < a1
    assert isinstance(d, DyadicSystem1D)


def test_uniform_scale_law():
    fr = [sample_uniform_2d(s).s % 1.0 for s in range(3000)]
    assert ks_uniform(fr) < 0.04


def test_mass_square_unit_cells():
    g = gen_grid(64)
    d = sample_uniform_2d(2)
    for m in (1.5, 4.0, 20.0):
        ps = mass_square(g, d, (0.3, 0.2), m)
        # unit cells: mass is the area, so the answer is the largest square with area <= m
        assert ps.square.side ** 2 <= m < (2 * ps.square.side) ** 2
        assert ps.mass == pytest.approx(ps.square.side ** 2, rel=1e-9)


def test_mass_square_floor_and_monotone():
    g = gen_grid(64, "uniform:1:2", seed=1)
    d = sample_uniform_2d(5)
    tiny = mass_square(g, d, (0.3, 0.2), 1e-6)
    assert tiny.floor
    prev = None
    for m in (1, 3, 9, 27):
        sq = mass_square(g, d, (0.3, 0.2), m).square
        if prev is not None:
            assert prev.inside(sq, tol=1e-12 * sq.side)
        prev = sq


def test_mass_square_consistency():
    g = gen_grid(64)
    d = sample_uniform_2d(6)
    S = mass_square(g, d, (1.1, -0.4), 16).square
    r = np.random.default_rng(0)
    for _ in range(10):
        w = (S.x + S.side * r.uniform(0.01, 0.99), S.y + S.side * r.uniform(0.01, 0.99))
        assert mass_square(g, d, w, 16).square == S


def test_window_too_small():
    g = gen_grid(8)
    with pytest.raises(WindowTooSmall):
        mass_square(g, sample_uniform_2d(0), (0.0, 0.0), 1e6)


def test_partition_disjoint_cover():
    g = gen_grid(64)
    d = sample_uniform_2d(1)
    region = Square(-8, -8, 16)
    parts = partition(g, d, 4.0, region)
    pts = np.random.default_rng(2).uniform(-8, 8, size=(4000, 2))
    count = np.zeros(len(pts), dtype=int)
    for p in parts:
        count += p.square.contains(pts, half_open=True)
        assert p.square.side ** 2 <= 4.0
    assert np.all(count == 1)


def test_partition_refines():
    g = gen_grid(64, "uniform:1:2", seed=3)
    d = sample_uniform_2d(4)
    region = Square(-6, -6, 12)
    fine = partition(g, d, 4.0, region)
    coarse = partition(g, d, 32.0, region)
    for f in fine:
        assert any(f.square.inside(c.square, tol=1e-9) for c in coarse)
    assert len(partition(g, d, 500.0, Square(-0.5, -0.5, 1))) <= 4


def test_square_mass_fractional():
    g = gen_grid(8)
    assert square_mass(g, Square(-0.25, -0.25, 1.0)) == pytest.approx(1.0)


def test_ergodic_average_examples():
    g = gen_grid(64)
    d = sample_uniform_2d(0)
    m, se = ergodic_average(g, d, lambda c, d_, p: np.ones(len(p)), 3, 100)
    assert m == 1.0 and se == 0.0
    vals = g.diameter ** 2 * (g.pi + g.pi_star) / g.area ** 2
    m, se = ergodic_average(g, d, cell_functional(vals), 3, 200)
    assert m == pytest.approx(16.0)
    big = cell_functional((g.diameter > 0.25 * d.side(3)).astype(float))
    assert ergodic_average(g, d, big, 3, 200)[0] == 0.0


def test_transport_identity_exact():
    rep = mass_transport_check(shifted_grid_sampler(8), identity_rule(), 5, 10, 3.0)
    assert rep.out_mean == rep.in_mean == 1.0 and rep.z_score == 0.0


def test_transport_identity_monte_carlo():
    rep = mass_transport_check(shifted_grid_sampler(8), identity_rule(), 200, 400, 3.0, seed=1, use_exact=False)
    assert abs(rep.out_mean - 1.0) < 5 * rep.out_se + 1e-12


def test_transport_rule_covariance():
    # F(C(H - z), C(w0 - z), C(w1 - z)) = C^-2 F(H, w0, w1)
    g = gen_grid(8, shift=True, seed=2)
    rule = neighbor_rule()
    r = np.random.default_rng(0)
    w0 = r.uniform(-3, 3, (300, 2))
    w1 = w0 + r.uniform(-1.5, 1.5, (300, 2))
    base = rule.weight(g, w0, w1)
    C, z = 2.5, np.array([0.3, -0.7])
    moved = rule.weight(g.transformed(C, z), C * (w0 - z), C * (w1 - z))
    np.testing.assert_allclose(moved, base / C ** 2)
    assert base.sum() > 0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(-4, 4))
def test_mass_square_nested_in_level(seed, k):
    d = sample_uniform_2d(seed)
    assert d.origin_square(k - 1).inside(d.origin_square(k), tol=1e-12 * d.side(k))
