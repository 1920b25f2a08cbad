import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare, chi2_contingency

from rsftrace.baselines import dense_reference
from rsftrace.estimators import estimate_basic
from rsftrace.forest import (
    root_probabilities,
    sample_forest,
    sample_forest_conditional,
    sample_parents,
)
from rsftrace.graph import (
    complete_graph,
    from_edge_list,
    gen_barabasi_albert,
    gen_grid2d,
    path_graph,
    star_graph,
)
from rsftrace.oracle import dense_K, enumerate_forests


def empirical(enum, parents):
    index = enum.index()
    counts = np.zeros(len(enum.weights))
    for p in parents:
        counts[index[tuple(p)]] += 1
    return counts


def root_map(parents):
    root = parents.copy()
    rows = np.arange(len(parents))[:, None]
    for _ in range(parents.shape[1]):
        root = parents[rows, root]
    return root


def test_single_node():
    f = sample_forest(from_edge_list([], 1), 0.3, rng=0)
    assert f.roots.tolist() == f.first_visit_roots.tolist() == [0]
    assert f.steps == 1


def test_isolated_nodes_are_first_visit_roots():
    g = from_edge_list([(0, 1)], 4)
    f = sample_forest(g, 1.0, rng=1)
    assert {2, 3} <= set(f.first_visit_roots.tolist())


def test_p2_three_forests_equally_likely(p2):
    enum = enumerate_forests(p2, 1.0)
    counts = empirical(enum, sample_parents(p2, 1.0, 30000, rng=3)[0])
    np.testing.assert_allclose(enum.probabilities, 1 / 3)
    assert chisquare(counts, enum.probabilities * counts.sum()).pvalue > 1e-3
    assert 0.5 * np.abs(counts / counts.sum() - 1 / 3).sum() < 0.02


# few forests: TV threshold is far above the sampling noise floor
@pytest.mark.parametrize("g", [path_graph(3), star_graph(3), complete_graph(3)], ids=lambda g: g.name)
@pytest.mark.parametrize("q", [0.1, 1.0, 10.0])
def test_forest_law_tv(g, q, rng):
    enum = enumerate_forests(g, q)
    counts = empirical(enum, sample_parents(g, q, 30000, rng)[0])
    assert 0.5 * np.abs(counts / counts.sum() - enum.probabilities).sum() < 0.02


# many forests: goodness of fit instead of a fixed TV level
@pytest.mark.parametrize("g", [
    complete_graph(4),
    path_graph(6),
    from_edge_list([(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)], 5),
    from_edge_list([(0, 1, 2.0), (1, 2, 0.5), (0, 2, 1.5), (2, 3, 3.0)], 4),
], ids=["K4", "P6", "house", "weighted"])
@pytest.mark.parametrize("q", [0.1, 1.0, 10.0])
def test_forest_law_chisquare(g, q, rng):
    enum = enumerate_forests(g, q)
    counts = empirical(enum, sample_parents(g, q, 30000, rng)[0])
    expected = enum.probabilities * counts.sum()
    # pool rare forests so every cell expects at least 5 draws
    big = expected >= 5
    obs = np.append(counts[big], counts[~big].sum())
    exp = np.append(expected[big], expected[~big].sum())
    if exp[-1] == 0:
        obs, exp = obs[:-1], exp[:-1]
    assert chisquare(obs, exp).pvalue > 1e-4


@pytest.mark.parametrize("g", [path_graph(2), complete_graph(3), star_graph(5), gen_grid2d(6)],
                         ids=lambda g: g.name)
def test_mean_roots_is_trace(g, rng):
    q = 0.8
    run = estimate_basic(g, q, 20000, rng)
    assert abs(run.mean - dense_reference(g, q)[1]) < 4 * run.stderr


@pytest.mark.parametrize("g", [path_graph(2), complete_graph(3)], ids=lambda g: g.name)
def test_root_probability_matrix(g, rng):
    q, N = 1.0, 20000
    roots = root_map(sample_parents(g, q, N, rng)[0])
    K = dense_K(g, q)
    for i in range(g.n):
        for j in range(g.n):
            freq = np.mean(roots[:, i] == j)
            se = np.sqrt(K[i, j] * (1 - K[i, j]) / N)
            assert abs(freq - K[i, j]) < 4 * se + 1e-12


def test_p2_mean_steps(p2):
    steps = sample_parents(p2, 1.0, 40000, rng=11)[2]
    # tr(K (I + D/q)) = 2 tr(K) = 8/3 on P2 at q=1
    assert abs(steps.mean() - 8 / 3) < 4 * steps.std() / np.sqrt(len(steps))
    assert steps.mean() <= 4


@pytest.mark.parametrize("make,q", [
    (lambda: complete_graph(3), 0.5),
    (lambda: star_graph(6), 2.0),
    (lambda: gen_grid2d(8), 0.3),
    (lambda: gen_barabasi_albert(100, 3, 1), 1.0),
])
def test_mean_steps_formula(make, q, rng):
    g = make()
    K = dense_K(g, q)
    expected = np.trace(K @ (np.eye(g.n) + np.diag(g.degrees) / q))
    steps = sample_parents(g, q, 5000, rng)[2]
    assert abs(steps.mean() / expected - 1) < 0.05
    assert expected <= g.n + 2 * g.m / q + 1e-9


def test_forest_structure(rng):
    g = gen_barabasi_albert(80, 2, 5)
    for _ in range(20):
        f = sample_forest(g, 0.5, rng)
        assert np.all(f.root_of[f.roots] == f.roots)
        assert set(f.root_of.tolist()) == set(f.roots.tolist())
        assert set(f.first_visit_roots.tolist()) <= set(f.roots.tolist())
        assert np.all(f.tree_id == f.tree_id[f.root_of])
        assert f.tree_sizes.sum() == g.n and len(f.tree_sizes) == f.n_roots
        for i in range(g.n):
            if f.parent[i] != i:
                assert f.parent[i] in g.neighbors(i)


def test_same_seed_same_forest(triangle):
    a, b = sample_forest(triangle, 1.0, 42), sample_forest(triangle, 1.0, 42)
    np.testing.assert_array_equal(a.parent, b.parent)


def test_conditional_all_rooted(p2):
    f = sample_forest_conditional(p2, 1.0, [0, 1], rng=0)
    assert f.roots.tolist() == [0, 1] and f.steps == 0


# Exact conditional root counts on P2 at q=1, enumerating coin sequences:
#   X={0}: node 1 is forced onto node 0 -> always one root.
#   X={}:  walk 0,1 (both forced), then alternate with absorption prob 1/2.
#          Absorbed first at 0 w.p. 2/3, then node 1 roots w.p. 1/2 -> 1.5 roots;
#          absorbed first at 1 w.p. 1/3 -> 1 root.  E = 2/3*1.5 + 1/3 = 4/3.
@pytest.mark.parametrize("X,expected", [([0], 1.0), ([1], 1.0), ([], 4 / 3)])
def test_conditional_p2_expectations(p2, X, expected):
    parents, first, _ = sample_parents(p2, 1.0, 20000, rng=5, X=X)
    nroots = (parents == np.arange(2)).sum(axis=1)
    se = nroots.std() / np.sqrt(len(nroots))
    assert abs(nroots.mean() - expected) <= 4 * se + 1e-12
    assert np.all(first == np.isin(np.arange(2), X))


def test_conditional_matches_filtered_unconditional(rng):
    g = from_edge_list([(0, 1), (1, 2), (2, 0), (2, 3)], 4)
    q = 0.7
    parents, first, _ = sample_parents(g, q, 60000, rng)
    keys = [tuple(p) for p in parents]
    for X in ([2], [0, 3], []):
        sel = np.all(first == np.isin(np.arange(g.n), X), axis=1)
        ref = [k for k, s in zip(keys, sel) if s]
        cond = [tuple(p) for p in sample_parents(g, q, len(ref), rng, X=X)[0]]
        cats = sorted(set(ref) | set(cond))
        table = np.array([[ref.count(c) for c in cats], [cond.count(c) for c in cats]])
        table = table[:, table.sum(axis=0) >= 10]
        if table.shape[1] > 1:
            assert chi2_contingency(table).pvalue > 1e-4


def test_conditional_errors(p2):
    with pytest.raises(ValueError, match="outside"):
        sample_forest_conditional(p2, 1.0, [2])
    g = from_edge_list([(0, 1)], 3)
    with pytest.raises(ValueError, match="isolated"):
        sample_forest_conditional(g, 1.0, [0])
    with pytest.raises(ValueError):
        sample_forest(p2, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**31), st.floats(0.05, 20.0))
def test_conditional_first_visit_equals_x(n, seed, q):
    r = np.random.default_rng(seed)
    g = gen_barabasi_albert(n, 1, seed) if n > 2 else path_graph(2)
    X = np.flatnonzero(r.random(n) < root_probabilities(g, q))
    f = sample_forest_conditional(g, q, X, r)
    assert f.first_visit_roots.tolist() == X.tolist()
    assert set(X.tolist()) <= set(f.roots.tolist())
