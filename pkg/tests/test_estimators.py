import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsftrace.baselines import dense_reference
from rsftrace.estimators import (
    RejectionError,
    alpha_heuristic,
    alpha_safe,
    build_strata,
    cv_sample,
    estimate_basic,
    estimate_cv,
    estimate_stratified,
    poisson_binomial_exact,
    poisson_binomial_normal,
    resolve_alpha,
    sample_root_set,
)
from rsftrace.forest import ForestSample, root_probabilities, sample_forest
from rsftrace.graph import (
    complete_graph,
    from_edge_list,
    gen_barabasi_albert,
    gen_grid3d,
    gen_k_regular,
    path_graph,
    star_graph,
)
from rsftrace.oracle import dense_laplacian, s_bar_matrix, s_tilde_matrix


def test_alpha_safe(p2, triangle):
    assert alpha_safe(p2, 1.0) == pytest.approx(1.0)
    assert alpha_safe(triangle, 2.0) == pytest.approx(1.0)
    assert alpha_safe(star_graph(9), 1.0) == pytest.approx(0.2)


def test_alpha_heuristic(p2):
    assert alpha_heuristic(p2, 1.0) == pytest.approx(0.5)
    assert alpha_heuristic(gen_k_regular(30, 20, 0), 5.0) == pytest.approx(0.2)


def test_resolve_alpha(p2):
    assert resolve_alpha(p2, 1.0, 0.25) == 0.25
    assert resolve_alpha(p2, 1.0, "safe") == 1.0
    with pytest.raises(ValueError):
        resolve_alpha(p2, 1.0, "optimal")


def test_cv_sample_both_roots(p2):
    cv = cv_sample(p2, ForestSample.from_parent([0, 1]), 1.0, alpha=0.5)
    assert cv.roots_count == 2
    assert cv.c_tilde == pytest.approx(-2.0)
    assert cv.c_bar == pytest.approx(-2.0)
    assert cv.s_tilde == pytest.approx(2 + 0.5 * -2.0)


def test_cv_sample_single_tree(p2):
    cv = cv_sample(p2, ForestSample.from_parent([1, 1]), 1.0, alpha=0.5)
    assert (cv.roots_count, cv.c_tilde, cv.c_bar) == (1, 1.0, 1.0)


def test_cv_sample_zero_alpha_and_sign(rng):
    g = gen_barabasi_albert(60, 3, 1)
    f = sample_forest(g, 0.5, rng)
    cv = cv_sample(g, f, 0.5, 0.0)
    assert cv.s_tilde == cv.s_bar == f.n_roots
    minus = cv_sample(g, f, 0.5, 0.3, sign=-1)
    assert minus.s_tilde == pytest.approx(f.n_roots - 0.3 * minus.c_tilde)
    with pytest.raises(ValueError):
        cv_sample(path_graph(3), f, 0.5, 0.1)


def _random_graph(r):
    n = int(r.integers(2, 31))
    m = int(r.integers(1, 3 * n))
    u, v = r.integers(0, n, m), r.integers(0, n, m)
    return from_edge_list(zip(u, v, r.uniform(0.2, 3.0, m)), n)


def test_trace_identities_dense(rng):
    for _ in range(100):
        g = _random_graph(rng)
        q = float(rng.uniform(0.05, 5))
        alpha = float(rng.uniform(-1, 2))
        f = sample_forest(g, q, rng)
        Kinv = (dense_laplacian(g) + q * np.eye(g.n)) / q
        cv = cv_sample(g, f, q, alpha)
        for S, s in ((s_tilde_matrix(f.parent), cv.s_tilde), (s_bar_matrix(f.parent), cv.s_bar)):
            dense = np.trace(S - alpha * (Kinv @ S - np.eye(g.n)))
            assert abs(dense - s) < 1e-10
        # cost: tilde touches only the roots' adjacency lists, bar each edge twice
        assert cv.visits_tilde == np.diff(g.indptr)[f.roots].sum()
        assert cv.visits_bar == 2 * g.m


def test_cv_zero_variance_at_optimal_alpha(p2, rng):
    run = estimate_cv(p2, 1.0, 500, 1 / 3, "tilde", rng)
    np.testing.assert_allclose(run.values, 4 / 3, atol=1e-12)


def test_cv_zero_alpha_equals_basic(rng):
    g = gen_barabasi_albert(100, 3, 2)
    a = estimate_basic(g, 0.7, 300, rng=17)
    b = estimate_cv(g, 0.7, 300, 0.0, "bar", rng=17)
    np.testing.assert_array_equal(a.values, b.values)


@pytest.mark.parametrize("policy", ["heuristic", "safe", 0.8])
@pytest.mark.parametrize("variant", ["tilde", "bar"])
def test_cv_unbiased_small(triangle, policy, variant, rng):
    run = estimate_cv(triangle, 1.0, 20000, policy, variant, rng)
    assert abs(run.mean - 1.5) < 4 * run.stderr + 1e-12


def test_cv_variant_validation(p2):
    with pytest.raises(ValueError):
        estimate_cv(p2, 1.0, 10, variant="hat")


def test_basic_limits(rng):
    g = gen_grid3d(4)
    assert estimate_basic(g, 1e6, 50, rng).mean == pytest.approx(g.n, rel=1e-3)
    assert estimate_basic(g, 1e-3, 50, rng).mean == pytest.approx(dense_reference(g, 1e-3)[1], abs=0.2)


def test_poisson_binomial_examples():
    np.testing.assert_allclose(poisson_binomial_exact([0.5, 0.5]), [0.25, 0.5, 0.25])
    np.testing.assert_allclose(poisson_binomial_exact([1.0, 1.0]), [0, 0, 1])
    with pytest.raises(ValueError):
        poisson_binomial_exact([0.2, 1.2])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=60))
def test_poisson_binomial_moments(probs):
    pmf = poisson_binomial_exact(probs)
    k = np.arange(len(pmf))
    p = np.array(probs)
    assert pmf.sum() == pytest.approx(1, abs=1e-9)
    assert pmf @ k == pytest.approx(p.sum(), abs=1e-9)
    assert pmf @ k**2 - (pmf @ k) ** 2 == pytest.approx(np.sum(p * (1 - p)), abs=1e-8)


def test_poisson_binomial_brute_force():
    p = np.array([0.1, 0.7, 0.35, 0.9])
    brute = np.zeros(5)
    for bits in range(16):
        x = np.array([(bits >> i) & 1 for i in range(4)])
        brute[x.sum()] += np.prod(np.where(x, p, 1 - p))
    np.testing.assert_allclose(poisson_binomial_exact(p), brute, atol=1e-15)


def test_normal_moments(p2):
    assert poisson_binomial_normal(p2, 1.0) == pytest.approx((1.0, 0.5))
    g = gen_k_regular(40, 6, 0)
    mu, s2 = poisson_binomial_normal(g, 2.0)
    assert mu == pytest.approx(40 * 2 / 8)
    assert s2 <= mu


def test_strata_p2(p2):
    plan = build_strata(p2, 1.0, 2, 100)
    assert plan.lo.tolist() == [0, 2] and plan.hi.tolist() == [1, 2]
    np.testing.assert_allclose(plan.probs, [0.75, 0.25])
    assert plan.alloc.tolist() == [75, 25]
    assert plan.model == "exact_poisson_binomial"


def test_single_stratum(triangle):
    plan = build_strata(triangle, 1.0, 1, 40)
    assert (plan.K, plan.lo.tolist(), plan.hi.tolist(), plan.alloc.tolist()) == (1, [0], [3], [40])
    np.testing.assert_allclose(plan.probs, [1.0])


@pytest.mark.parametrize("make", [
    lambda: gen_barabasi_albert(2000, 10, 0),
    lambda: gen_k_regular(2000, 20, 0),
    lambda: gen_grid3d(10),
])
@pytest.mark.parametrize("q", [0.5, 3.0, 20.0])
def test_five_strata_near_equiprobable(make, q):
    g = make()
    plan = build_strata(g, q, 5, 100)
    assert plan.K == 5
    assert np.all((plan.probs >= 0.1) & (plan.probs <= 0.3))
    assert plan.probs.sum() == pytest.approx(1, abs=1e-9)
    assert plan.alloc.sum() == 100 and plan.alloc.min() >= 1
    normal = build_strata(g, q, 5, 100, model="normal_approx")
    assert normal.probs.sum() == pytest.approx(1, abs=1e-6)
    assert np.all((normal.probs >= 0.1) & (normal.probs <= 0.3))


def test_strata_structure_and_merging(star9):
    # tiny graph with K larger than the support: strata merge
    plan = build_strata(path_graph(2), 1.0, 6, 12)
    assert plan.merged and plan.K <= 3
    assert plan.lo[0] == 0 and plan.hi[-1] == 2
    assert np.all(plan.lo[1:] == plan.hi[:-1] + 1)
    assert plan.alloc.sum() == 12 and plan.alloc.min() >= 1
    with pytest.raises(ValueError):
        build_strata(star9, 1.0, 5, 3)


def test_root_set_full_stratum(p2, rng):
    X, attempts = sample_root_set(p2, 1.0, (2, 2), rng, return_attempts=True)
    assert X.tolist() == [0, 1]
    tries = [sample_root_set(p2, 1.0, (2, 2), rng, return_attempts=True)[1] for _ in range(4000)]
    assert 1 / np.mean(tries) == pytest.approx(0.25, abs=0.02)
    assert sample_root_set(p2, 1.0, (0, 2), rng, return_attempts=True)[1] == 1


def test_root_set_conditional_pmf(p2, rng):
    sizes = np.array([len(sample_root_set(p2, 1.0, (1, 2), rng)) for _ in range(6000)])
    pmf = poisson_binomial_exact([0.5, 0.5])[1:]
    pmf = pmf / pmf.sum()
    for k, p in zip((1, 2), pmf):
        assert abs(np.mean(sizes == k) - p) < 4 * np.sqrt(p * (1 - p) / len(sizes))


def test_root_set_rejection_budget(rng):
    g = star_graph(30)
    with pytest.raises(RejectionError):
        sample_root_set(g, 0.01, (31, 31), rng, p_stratum=1.0)


def test_stratified_p2_exact(p2, rng):
    plan = build_strata(p2, 1.0, 2, 20000)
    run = estimate_stratified(p2, 1.0, plan, rng)
    assert abs(run.mean - 4 / 3) < 4 * run.stderr
    assert run.n_samples == 20000


def test_stratified_single_stratum_matches_basic(rng):
    g = gen_barabasi_albert(200, 4, 3)
    q = 1.0
    run = estimate_stratified(g, q, build_strata(g, q, 1, 4000), rng)
    basic = estimate_basic(g, q, 4000, rng)
    assert abs(run.mean - basic.mean) < 4 * np.hypot(run.stderr, basic.stderr)
    assert run.var == pytest.approx(basic.var, rel=0.15)


def test_stratified_rejects_wrong_q(p2):
    with pytest.raises(ValueError):
        estimate_stratified(p2, 2.0, build_strata(p2, 1.0, 2, 10))


def test_stratified_normal_model_consistency(rng):
    g = gen_k_regular(1200, 8, 4)
    q = 2.0
    ref = dense_reference(g, q)[1]
    run = estimate_stratified(g, q, build_strata(g, q, 5, 3000, model="normal_approx"), rng)
    assert abs(run.mean - ref) < 3 * run.stderr + 0.01 * ref


@pytest.mark.parametrize("g", [path_graph(2), complete_graph(3)], ids=lambda g: g.name)
def test_control_variates_mean_zero(g, rng):
    run = estimate_cv(g, 1.0, 20000, "heuristic", "tilde", rng)
    for c in (run.extra["c_tilde"], run.extra["c_bar"]):
        assert abs(c.mean()) < 4 * c.std(ddof=1) / np.sqrt(len(c))


def test_cv_reduces_variance_on_torus(rng):
    g = gen_grid3d(10)
    q = 2.2  # tr(K)/n close to 0.3
    a = estimate_cv(g, q, 2000, "heuristic", "tilde", rng)
    roots, s_bar = a.extra["roots"], roots_plus(a)
    assert np.var(s_bar) <= np.var(a.values) <= np.var(roots)


def roots_plus(run):
    return run.extra["roots"] + run.extra["alpha"] * run.extra["c_bar"]


def test_root_probability_helper(star9):
    np.testing.assert_allclose(root_probabilities(star9, 1.0), [0.1] + [0.5] * 9)
