import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scalewalk.analysis import (
    EmpiricalMeasure,
    batch_means,
    csv_text,
    ks_two_sample,
    ks_uniform,
    max_transport,
    prokhorov_distance,
    render_svg,
    write_csv,
)
from scalewalk.generators import gen_grid
from scalewalk.geometry import Square
from scalewalk.walk import embed_walk, run_walk


def pm(*pts, w=None):
    pts = np.asarray(pts, dtype=float)
    w = np.full(len(pts), 1 / len(pts)) if w is None else np.asarray(w, dtype=float)
    return EmpiricalMeasure(pts, w)


def subset_feasible(mu, nu, eps):
    """mu(A) <= nu(A^eps) + eps over every subset A of mu's support, and the same with roles swapped."""
    for a, b in ((mu, nu), (nu, mu)):
        D = np.hypot(*(a.points[:, None, :] - b.points[None, :, :]).transpose(2, 0, 1))
        near = D <= eps * (1 + 1e-12) + 1e-15
        for r in range(1, a.n_atoms + 1):
            for A in itertools.combinations(range(a.n_atoms), r):
                A = list(A)
                if a.weights[A].sum() > b.weights[near[A].any(0)].sum() + eps + 1e-12:
                    return False
    return True


def brute_prokhorov(mu, nu, tol):
    lo, hi = 0.0, 1.0
    if subset_feasible(mu, nu, 0.0):
        return 0.0
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if subset_feasible(mu, nu, mid):
            hi = mid
        else:
            lo = mid
    return hi


def test_prokhorov_examples():
    m = pm((0.3, 0.1), (2, 2))
    assert prokhorov_distance(m, m) == 0.0
    for d in (0.25, 0.7, 3.0):
        assert prokhorov_distance(pm((0, 0)), pm((d, 0)), tol=1e-9) == pytest.approx(min(d, 1.0), abs=2e-9)
    assert prokhorov_distance(pm((0, 0), (1, 0)), pm((0, 0)), tol=1e-9) == pytest.approx(0.5, abs=2e-9)


def test_measure_validation():
    with pytest.raises(ValueError):
        EmpiricalMeasure([[0, 0]], [0.5])
    with pytest.raises(ValueError):
        EmpiricalMeasure([[0, 0], [1, 1]], [1.5, -0.5])
    m = EmpiricalMeasure.from_points([[0, 0], [0, 0], [1, 1]])
    assert m.n_atoms == 2 and list(m.counts) == [2, 1]


def random_measure(rng, k):
    w = rng.random(k) + 0.05
    return EmpiricalMeasure(rng.random((k, 2)) * 1.2, w / w.sum())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5), st.integers(1, 5))
def test_prokhorov_matches_subset_oracle(seed, ka, kb):
    rng = np.random.default_rng(seed)
    mu, nu = random_measure(rng, ka), random_measure(rng, kb)
    tol = 1e-5
    assert abs(prokhorov_distance(mu, nu, tol) - brute_prokhorov(mu, nu, tol)) <= 2 * tol


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_prokhorov_metric_properties(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_measure(rng, int(rng.integers(1, 8))) for _ in range(3))
    tol = 1e-6
    ab, ba = prokhorov_distance(a, b, tol), prokhorov_distance(b, a, tol)
    assert abs(ab - ba) <= tol
    assert 0 <= ab <= 1
    assert prokhorov_distance(a, c, tol) <= ab + prokhorov_distance(b, c, tol) + 2 * tol


def test_count_capacities_exact():
    # 3 vs 5 samples: exact integer capacities
    a = EmpiricalMeasure.from_points([[0, 0]] * 2 + [[5, 5]])
    b = EmpiricalMeasure.from_points([[0, 0]] * 5)
    assert max_transport(a, b, 0.0) == pytest.approx(2 / 3, abs=1e-15)
    assert prokhorov_distance(a, b, 1e-9) == pytest.approx(1 / 3, abs=2e-9)


def test_large_sample_capacities_do_not_overflow():
    # 40000 x 30000 samples: the count product exceeds the int32 flow range
    x = np.random.default_rng(0).random((40000, 2))
    a = EmpiricalMeasure.from_points(x)
    b = EmpiricalMeasure.from_points(x[:30000])
    assert max_transport(a, b, 1e-9) == 0.75
    # coprime sizes leave only quantized weights
    c = EmpiricalMeasure.from_points(x[:39999])
    assert max_transport(c, b, 1e-9) == pytest.approx(30000 / 39999, abs=(39999 + 30000) / 2 ** 29)


def test_ks_uniform():
    assert ks_uniform([0.5] * 20) == 0.5
    n = 50
    assert ks_uniform(np.arange(n) / n) <= 1 / n + 1e-15
    u = np.random.default_rng(11).random(10000)
    assert ks_uniform(u) < 0.02
    with pytest.raises(ValueError):
        ks_uniform([])


def test_ks_uniform_matches_brute_force():
    x = np.random.default_rng(2).random(200)
    grid = np.sort(np.concatenate([x, x - 1e-12, x + 1e-12, [0, 1]]))
    ecdf = np.searchsorted(np.sort(x), grid, side="right") / len(x)
    assert ks_uniform(x) == pytest.approx(np.abs(ecdf - np.clip(grid, 0, 1)).max(), abs=1e-9)


def test_ks_two_sample_identical():
    a = np.arange(100) / 100
    assert ks_two_sample(a, a) == 0.0


def test_batch_means():
    m, se = batch_means(np.ones(100))
    assert m == 1.0 and se == 0.0
    v = np.random.default_rng(1).normal(size=20000)
    m, se = batch_means(v, 20)
    assert abs(m) <= 4 * se
    assert se == pytest.approx(1 / math.sqrt(20000), rel=0.5)


def test_csv_format(tmp_path):
    text = csv_text(["a", "b", "c"], [[0.1, 3, True]])
    assert text == "a,b,c\n0.10000000000000001,3,1\n"
    write_csv(tmp_path / "x.csv", ["a"], [[1.5]])
    assert (tmp_path / "x.csv").read_bytes() == b"a\n1.5\n"


def test_svg():
    empty = render_svg()
    assert empty.startswith("<?xml") and empty.rstrip().endswith("</svg>")
    assert "<path" not in empty and "<polyline" not in empty
    g = gen_grid(4)
    doc = render_svg(g)
    assert doc.count("<path ") == 16
    assert render_svg(g) == doc
    big = gen_grid(16)
    curves = [embed_walk(big, run_walk(big, (0.0, 0.0), n_steps=20, seed=s)) for s in range(3)]
    over = render_svg(big, curves=curves, squares=[Square(-2, -2, 4)])
    assert over.count("<polyline") == 3 and over.count("<rect") == 1
