"""Forest-based estimators of tr(K), K = q (L + qI)^-1.

* :func:`estimate_basic` averages the root count.
* :func:`estimate_cv` adds a control variate with known zero mean, either the
  root-neighborhood statistic (``"tilde"``) or the tree-boundary statistic
  (``"bar"``).
* :func:`estimate_stratified` stratifies on the number of first-visit roots,
  whose law is Poisson-binomial with success probabilities ``q / (q + d_i)``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import _kernels
from .forest import ForestSample, kernel_arrays, root_probabilities, spawn_seeds
from .graph import Graph

__all__ = [
    "EstimateRun",
    "CvSample",
    "StrataPlan",
    "alpha_safe",
    "alpha_heuristic",
    "resolve_alpha",
    "cv_sample",
    "estimate_basic",
    "estimate_cv",
    "poisson_binomial_exact",
    "poisson_binomial_normal",
    "build_strata",
    "sample_root_set",
    "estimate_stratified",
    "RejectionError",
    "EXACT_THRESHOLD",
]

log = logging.getLogger(__name__)

# Poisson-binomial DP is used up to this many nodes, normal approximation above
EXACT_THRESHOLD = 4096


class RejectionError(RuntimeError):
    """Rejection sampling of a first-visit root set exceeded its attempt budget."""


@dataclass
class EstimateRun:
    """Result of N samples of one estimator.

    ``var`` is the per-sample variance (so ``stderr**2 == var / n_samples``);
    for stratified runs it is the per-sample equivalent ``N * Var(mean)``.
    ``time_per_sample`` is wall time in seconds, excluding one warm-up draw.
    """

    method: str
    mean: float
    var: float
    n_samples: int
    time_per_sample: float
    seed: object = None
    values: np.ndarray | None = field(default=None, repr=False)
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def stderr(self) -> float:
        return math.sqrt(self.var / self.n_samples)

    @property
    def sigma1(self) -> float:
        """Single-sample standard deviation, ``sqrt(N) * stderr``."""
        return math.sqrt(self.n_samples) * self.stderr


@dataclass(frozen=True)
class CvSample:
    roots_count: int
    c_tilde: float
    c_bar: float
    s_tilde: float
    s_bar: float
    alpha: float
    visits_tilde: int = 0
    visits_bar: int = 0


def alpha_safe(g: Graph, q: float) -> float:
    """``2q / (q + d_max)``."""
    return 2 * q / (q + g.d_max)


def alpha_heuristic(g: Graph, q: float) -> float:
    """``q / (q + d_avg)``; a good guess of the optimal coefficient in practice."""
    return q / (q + g.d_avg)


def resolve_alpha(g: Graph, q: float, policy) -> float:
    if policy == "safe":
        return alpha_safe(g, q)
    if policy == "heuristic":
        return alpha_heuristic(g, q)
    if isinstance(policy, (int, float)) and not isinstance(policy, bool):
        return float(policy)
    raise ValueError(f"unknown alpha policy {policy!r}")


def cv_sample(g: Graph, f: ForestSample, q: float, alpha: float, sign: int = 1) -> CvSample:
    """Both control variates of forest ``f`` and the combined estimates.

    ``s = |roots| + sign * alpha * c``. The default ``sign=+1`` is the one for
    which ``s`` is the trace of the corrected matrix estimator; ``sign=-1``
    gives the literal minus form.
    """
    if f.n != g.n:
        raise ValueError(f"forest has {f.n} nodes, graph has {g.n}")
    indptr, indices, _, weights, _ = kernel_arrays(g)
    t_sum, t_visits = _kernels.c_tilde_sum(indptr, indices, weights, f.root_of)
    b_sum, b_visits = _kernels.c_bar_sum(indptr, indices, weights, f.tree_id, f.tree_sizes)
    r = f.n_roots
    ct = g.n - r - t_sum / q
    cb = g.n - r - b_sum / q
    return CvSample(
        roots_count=r,
        c_tilde=ct,
        c_bar=cb,
        s_tilde=r + sign * alpha * ct,
        s_bar=r + sign * alpha * cb,
        alpha=alpha,
        visits_tilde=int(t_visits),
        visits_bar=int(b_visits),
    )


def _clock(threads: bool):
    # threaded runs report aggregate CPU time, serial runs wall time
    return time.process_time if threads else time.perf_counter


def _forest_stats(g: Graph, q: float, N: int, rng, want_cv: bool, threads: bool = False):
    """Run N forests (plus one untimed warm-up); return raw per-sample columns and timing."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if not q > 0:
        raise ValueError("q must be positive")
    indptr, indices, cumw, weights, deg = kernel_arrays(g)
    seeds = spawn_seeds(rng, N + 1)
    kernel = _kernels.forest_batch_parallel if threads else _kernels.forest_batch
    out = np.zeros((N + 1, 5))
    clock = _clock(threads)
    kernel(indptr, indices, cumw, weights, deg, float(q), seeds[:1], want_cv, out[:1])
    t0 = clock()
    kernel(indptr, indices, cumw, weights, deg, float(q), seeds[1:], want_cv, out[1:])
    elapsed = clock() - t0
    return out[1:], elapsed / N


def _run_from_values(method, values, tps, seed, **extra) -> EstimateRun:
    var = float(np.var(values, ddof=1)) if len(values) > 1 else 0.0
    return EstimateRun(method, float(np.mean(values)), var, len(values), tps,
                       seed=seed, values=values, extra=extra)


def estimate_basic(g: Graph, q: float, N: int, rng=None, threads: bool = False) -> EstimateRun:
    """Mean root count over N independent forests."""
    out, tps = _forest_stats(g, q, N, rng, want_cv=False, threads=threads)
    return _run_from_values("basic", out[:, 0].copy(), tps, rng, steps=out[:, 2].copy())


def estimate_cv(g: Graph, q: float, N: int, alpha_policy="heuristic", variant: str = "tilde",
                rng=None, sign: int = 1, threads: bool = False) -> EstimateRun:
    """Control-variate estimator over N forests.

    ``alpha_policy`` is ``"heuristic"``, ``"safe"`` or a number. The run's
    ``extra`` carries the root counts and both control variates so that the
    two variants can be compared on the same forests.
    """
    if variant not in ("tilde", "bar"):
        raise ValueError(f"variant must be 'tilde' or 'bar', got {variant!r}")
    alpha = resolve_alpha(g, q, alpha_policy)
    out, tps = _forest_stats(g, q, N, rng, want_cv=True, threads=threads)
    roots = out[:, 0].copy()
    c_tilde = g.n - roots - out[:, 3] / q
    c_bar = g.n - roots - out[:, 4] / q
    c = c_tilde if variant == "tilde" else c_bar
    values = roots + sign * alpha * c
    return _run_from_values(f"cv_{variant}", values, tps, rng, alpha=alpha, roots=roots,
                            c_tilde=c_tilde, c_bar=c_bar, steps=out[:, 2].copy())


def poisson_binomial_exact(probs) -> np.ndarray:
    """pmf of a sum of independent Bernoulli(p_i) by iterative convolution."""
    probs = np.asarray(probs, dtype=np.float64)
    if np.any((probs < 0) | (probs > 1)) or np.any(np.isnan(probs)):
        raise ValueError("probabilities must lie in [0, 1]")
    pmf = np.zeros(len(probs) + 1)
    pmf[0] = 1.0
    for k, p in enumerate(probs, 1):
        pmf[1:k + 1] = pmf[1:k + 1] * (1 - p) + pmf[:k] * p
        pmf[0] *= 1 - p
    return pmf


def poisson_binomial_normal(g: Graph, q: float) -> tuple[float, float]:
    """Mean and variance of the first-visit root count."""
    p = root_probabilities(g, q)
    return float(p.sum()), float(np.sum(q * g.degrees / (q + g.degrees) ** 2))


@dataclass
class StrataPlan:
    """Contiguous strata ``[lo[k], hi[k]]`` of the first-visit root count."""

    lo: np.ndarray
    hi: np.ndarray
    probs: np.ndarray
    alloc: np.ndarray
    model: str
    q: float
    proportional: bool = True
    merged: bool = False

    @property
    def K(self) -> int:
        return len(self.lo)

    @property
    def n_samples(self) -> int:
        return int(self.alloc.sum())

    @property
    def cut_points(self) -> np.ndarray:
        return self.hi[:-1].copy()


def _allocate(N: int, probs: np.ndarray) -> np.ndarray:
    raw = N * probs
    alloc = np.floor(raw).astype(np.int64)
    short = N - alloc.sum()
    order = np.argsort(-(raw - alloc), kind="stable")
    alloc[order[:short]] += 1
    for k in np.flatnonzero(alloc == 0):
        alloc[np.argmax(alloc)] -= 1
        alloc[k] = 1
    return alloc


def build_strata(g: Graph, q: float, K: int, N: int, model: str | None = None,
                 exact_threshold: int = EXACT_THRESHOLD) -> StrataPlan:
    """Split ``{0..n}`` into about K equiprobable strata with proportional allocation.

    Cut ``b_k`` is the smallest count whose CDF reaches ``k/K``. Empty strata
    are merged away, so the plan may hold fewer than K strata (``merged``).
    """
    if K < 1 or N < K:
        raise ValueError(f"need K >= 1 and N >= K, got K={K}, N={N}")
    n = g.n
    if model is None:
        model = "exact_poisson_binomial" if n <= exact_threshold else "normal_approx"
    if model == "exact_poisson_binomial":
        pmf = poisson_binomial_exact(root_probabilities(g, q))
        cdf = np.cumsum(pmf)
        cdf[-1] = 1.0
        cuts = [int(np.searchsorted(cdf, k / K - 1e-12)) for k in range(1, K)]

        def mass(a, b):
            return float(pmf[a:b + 1].sum())
    elif model == "normal_approx":
        mu, s2 = poisson_binomial_normal(g, q)
        sd = math.sqrt(s2)
        if sd == 0:
            raise ValueError("degenerate first-visit root count; use the exact model")
        cuts = [int(min(n, max(0, math.ceil(mu + sd * norm.ppf(k / K) - 0.5)))) for k in range(1, K)]

        def mass(a, b):
            # outermost strata absorb the tails beyond [0, n]
            hi = 1.0 if b >= n else norm.cdf((b + 0.5 - mu) / sd)
            lo = 0.0 if a <= 0 else norm.cdf((a - 0.5 - mu) / sd)
            return float(hi - lo)
    else:
        raise ValueError(f"unknown model {model!r}")

    bounds = sorted(set(c for c in cuts if c < n))
    lo_f = [0] + [c + 1 for c in bounds]
    hi_f = bounds + [n]
    # zero-mass strata (possible only through underflow) join their left neighbor
    k = 0
    while k < len(lo_f) and len(lo_f) > 1:
        if mass(lo_f[k], hi_f[k]) > 0:
            k += 1
        elif k == 0:
            lo_f.pop(1)
            hi_f.pop(0)
        else:
            hi_f[k - 1] = hi_f.pop(k)
            lo_f.pop(k)
    probs = np.array([mass(a, b) for a, b in zip(lo_f, hi_f)])
    merged = len(probs) < K
    if merged:
        log.info("strata merged: requested K=%d, built %d", K, len(probs))
    return StrataPlan(
        lo=np.array(lo_f, dtype=np.int64),
        hi=np.array(hi_f, dtype=np.int64),
        probs=probs,
        alloc=_allocate(N, probs),
        model=model,
        q=float(q),
        merged=merged,
    )


def _max_attempts(p_stratum: float) -> int:
    return max(1000, math.ceil(50 / p_stratum)) if p_stratum > 0 else 1000


def sample_root_set(g: Graph, q: float, stratum: tuple[int, int], rng=None,
                    p_stratum: float | None = None, return_attempts: bool = False):
    """Draw independent Bernoulli(q/(q+d_i)) memberships until the count lands in ``stratum``.

    ``p_stratum`` (the stratum's probability) sets the attempt budget
    ``max(1000, ceil(50 / p_stratum))``; it is computed exactly when omitted
    and n is small enough.
    """
    rng = np.random.default_rng(rng)
    lo, hi = stratum
    p = root_probabilities(g, q)
    if p_stratum is None:
        if g.n <= EXACT_THRESHOLD:
            p_stratum = float(poisson_binomial_exact(p)[lo:hi + 1].sum())
        else:
            p_stratum = 0.0
    budget = _max_attempts(p_stratum)
    for attempt in range(1, budget + 1):
        x = rng.random(g.n) < p
        if lo <= x.sum() <= hi:
            X = np.flatnonzero(x)
            return (X, attempt) if return_attempts else X
    raise RejectionError(f"no root set with size in [{lo}, {hi}] after {budget} draws")


def estimate_stratified(g: Graph, q: float, plan: StrataPlan, rng=None,
                        threads: bool = False) -> EstimateRun:
    """Stratified root-count estimator: sum over strata of P(stratum) * stratum mean."""
    if not math.isclose(plan.q, q):
        raise ValueError(f"plan built for q={plan.q}, called with q={q}")
    indptr, indices, cumw, _, deg = kernel_arrays(g)
    p_root = root_probabilities(g, q)
    kernel = _kernels.stratum_batch_parallel if threads else _kernels.stratum_batch
    N = plan.n_samples
    seeds = spawn_seeds(rng, N + 1)
    # warm-up draw from the widest stratum, not timed
    k0 = int(np.argmax(plan.probs))
    warm = np.zeros((1, 3), dtype=np.int64)
    kernel(indptr, indices, cumw, deg, float(q), p_root, plan.lo[k0], plan.hi[k0],
           _max_attempts(plan.probs[k0]), seeds[:1], warm)
    start = 1
    means, variances, per_stratum = [], [], []
    clock = _clock(threads)
    t0 = clock()
    for k in range(plan.K):
        Nk = int(plan.alloc[k])
        out = np.zeros((Nk, 3), dtype=np.int64)
        kernel(indptr, indices, cumw, deg, float(q), p_root, plan.lo[k], plan.hi[k],
               _max_attempts(plan.probs[k]), seeds[start:start + Nk], out)
        start += Nk
        if np.any(out[:, 1] < 0):
            raise RejectionError(
                f"stratum [{plan.lo[k]}, {plan.hi[k]}] (p={plan.probs[k]:.3g}) rejected too often")
        vals = out[:, 0].astype(np.float64)
        per_stratum.append(vals)
        means.append(vals.mean())
        variances.append(vals.var(ddof=1) if Nk > 1 else 0.0)
    elapsed = clock() - t0
    means, variances = np.array(means), np.array(variances)
    var_mean = float(np.sum(plan.probs ** 2 * variances / plan.alloc))
    return EstimateRun(
        method="stratified",
        mean=float(plan.probs @ means),
        var=var_mean * N,
        n_samples=N,
        time_per_sample=elapsed / N,
        seed=rng,
        extra={"plan": plan, "strata_values": per_stratum, "strata_means": means,
               "strata_vars": variances, "singleton_strata": bool(np.any(plan.alloc < 2))},
    )
