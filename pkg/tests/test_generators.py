import math

import numpy as np
import pytest

from scalewalk.environment import validate
from scalewalk.errors import ConfigurationError
from scalewalk.generators import (
    gen_big_cell_grid,
    gen_grid,
    gen_long_range,
    gen_percolation_faces,
    gen_split_grid,
    gen_split_path,
    merge_cells,
    parse_law,
    vertex_cells,
)


def test_grid_counts():
    g = gen_grid(4)
    assert g.n_cells == 16 and len(g.edges) == 24
    assert np.all(g.conductance == 1.0)
    assert g.area.sum() == pytest.approx(g.window.side ** 2)


def test_grid_uniform_support_and_determinism():
    a = gen_grid(16, "uniform:1:2", seed=5)
    b = gen_grid(16, "uniform:1:2", seed=5)
    assert np.all((a.conductance >= 1) & (a.conductance <= 2))
    np.testing.assert_array_equal(a.conductance, b.conductance)
    assert not np.array_equal(a.conductance, gen_grid(16, "uniform:1:2", seed=6).conductance)


def test_grid_shift():
    g = gen_grid(8, shift=True, seed=3)
    h = int(g.locate(np.zeros((1, 2)))[0])
    x0 = g.bbox[h, 0]
    assert x0 != math.floor(x0) and x0 - math.floor(x0) != 0.5
    np.testing.assert_allclose(g.area, 1.0)


@pytest.mark.parametrize("law", ["constant:2", "uniform:1:3", "lognormal:0:0.5", "twovalue:1:10:0.3"])
def test_parse_law(law):
    draw = parse_law(law)
    x = draw(np.random.default_rng(0), 1000)
    assert np.all(x > 0)


def test_parse_law_rejects_garbage():
    with pytest.raises(ValueError):
        parse_law("pareto:1")


def test_split_grid_k1_counts():
    s = gen_split_grid(1)
    assert s.n_cells == 10
    assert s.area.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("k", [1, 3, 5])
def test_split_grid_interface(k):
    s = gen_split_grid(k)
    assert s.area.sum() == pytest.approx(1.0, rel=1e-12)
    c = s.centroid
    a = 2.0 ** -k
    top_big = np.nonzero(np.isclose(s.area, a * a) & np.isclose(c[:, 1], 0.5 - a / 2))[0]
    for h in top_big:
        nb, _ = s.neighbors(int(h))
        assert (c[nb, 1] > 0.5).sum() == 2
    assert validate(s).ok


def test_split_grid_range():
    for k in (0, 10):
        with pytest.raises(ValueError):
            gen_split_grid(k)


def test_split_path_gamblers_ruin():
    from scalewalk.walk import exact_hitting_probability

    for n in (2, 8, 32):
        p = gen_split_path(n)
        start = n  # first cell above the midline
        pb = exact_hitting_probability(p, start, [0], [3 * n - 1])
        assert pb == pytest.approx((2 * n - 1) / (3 * n - 1), abs=1e-9)


def test_percolation_extremes():
    g = gen_grid(6)
    p1 = gen_percolation_faces(1.0, 6, seed=0)
    assert p1.n_cells == g.n_cells and len(p1.edges) == len(g.edges)
    np.testing.assert_allclose(np.sort(p1.area), np.sort(g.area))
    p0 = gen_percolation_faces(0.0, 6, seed=0)
    assert p0.n_cells == 1 and len(p0.edges) == 0
    assert p0.area[0] == pytest.approx(36.0)


def test_percolation_area_conservation_and_validity():
    p = gen_percolation_faces(0.7, 32, seed=4)
    assert p.area.sum() == pytest.approx(32 * 32, rel=1e-9)
    assert p.n_cells > 100
    assert validate(p).ok
    # determinism
    q = gen_percolation_faces(0.7, 32, seed=4)
    np.testing.assert_array_equal(p.coords, q.coords)


def test_percolation_open_edge_accounting():
    # every open separating edge contributes exactly 1 to one pair's conductance
    p = gen_percolation_faces(0.6, 16, seed=2)
    assert np.all(p.conductance >= 1) and np.all(p.conductance == np.round(p.conductance))


def test_long_range_neighbors():
    one = gen_long_range(1, n=8, seed=0)
    four = np.diff(one.adjacency.indptr).max()
    assert four == 4
    two = gen_long_range(2, n=9, seed=0)
    centre = int(np.argmin(np.hypot(*two.centroid.T)))
    brute = sum(1 for dx in range(-2, 3) for dy in range(-2, 3) if 0 < dx * dx + dy * dy <= 4)
    assert two.degree[centre] == brute == 12
    assert np.all((two.area >= 0.25) & (two.area <= 0.26))
    assert validate(two).ok


def test_vertex_cells_of_grid():
    g = gen_grid(6)
    v = vertex_cells(g)
    assert v.area.sum() == pytest.approx(g.area.sum(), rel=1e-12)
    inner = v.frame == False  # noqa: E712
    np.testing.assert_allclose(v.area[inner], 1.0)
    lat = g.lattice
    deg = np.bincount(lat.edges.ravel(), minlength=len(lat.vertices))
    np.testing.assert_array_equal(v.degree, deg)


def test_vertex_cells_need_lattice():
    with pytest.raises(ConfigurationError):
        vertex_cells(gen_split_grid(2))


def test_merge_and_big_cell():
    g = gen_grid(4)
    m = merge_cells(g, [0, 1])
    assert m.n_cells == g.n_cells - 1
    assert m.area.sum() == pytest.approx(g.area.sum())
    b = gen_big_cell_grid(32, 8)
    assert b.area.max() == pytest.approx(64.0)
    assert b.area.sum() == pytest.approx(32 * 32)
    assert validate(b).ok
