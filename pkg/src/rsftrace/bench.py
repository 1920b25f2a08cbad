"""Effective-runtime benchmark.

Each estimator runs N samples (default 100). With ``sigma1 = sqrt(N) *
stderr`` the number of samples needed for relative error ``epsilon`` is
``k = ceil((sigma1 / (epsilon * tr_ref))**2)`` and the effective runtime is
``k`` times the mean time per sample.

Results stream out as CSV with the columns in :data:`CSV_COLUMNS`.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np
import yaml
from scipy.optimize import brentq

from . import graph as G
from .baselines import DENSE_LIMIT, ProbeConfig, dense_reference, estimate_probe
from .estimators import (
    EstimateRun,
    build_strata,
    estimate_basic,
    estimate_cv,
    estimate_stratified,
)
from .forest import root_probabilities

__all__ = [
    "CSV_COLUMNS",
    "METHODS",
    "BenchConfig",
    "effective_runtime",
    "find_q_for_ratio",
    "build_graph",
    "parse_graph_spec",
    "full_preset",
    "load_config",
    "run_method",
    "run_benchmark",
    "write_csv",
    "read_csv",
    "check_consistency",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = [
    "graph", "n", "m", "q", "ratio", "method", "mean", "stderr", "t_per_sample", "k",
    "effective_runtime_s", "seed", "trace_ref", "trace_ref_stderr", "k_rel_err", "flags", "error",
]

METHODS = ("basic", "cv_tilde", "cv_bar", "stratified", "hutchinson_cg", "girard_cg")


def effective_runtime(run: EstimateRun, trace_ref: float, epsilon: float = 0.002) -> tuple[int, float, list[str]]:
    """Samples ``k`` needed for relative error ``epsilon`` and the time they take.

    Returns ``(k, seconds, flags)``. A run whose spread is at rounding level
    needs one sample and is flagged ``zero_variance``.
    """
    if not trace_ref > 0 or not epsilon > 0:
        raise ValueError("trace_ref and epsilon must be positive")
    plan = run.extra.get("plan")
    if plan is not None and not plan.proportional:
        raise ValueError("effective runtime needs proportional stratum allocation")
    flags = []
    if run.sigma1 <= 1e-12 * max(abs(run.mean), 1.0):
        flags.append("zero_variance")
        k = 1
    else:
        x = (run.sigma1 / (epsilon * trace_ref)) ** 2
        # absorb float noise such as 8.999999999999998 for an exact 9
        k = max(1, math.ceil(x * (1 - 1e-12)))
    return k, k * run.time_per_sample, flags


def _dense_ratio_fn(g: G.Graph):
    L = np.diag(g.degrees) - g.adjacency().toarray()
    lam = np.linalg.eigvalsh(L)

    def ratio(q):
        return float(np.sum(q / (q + lam)) / g.n)
    return ratio


def find_q_for_ratio(g: G.Graph, target: float, tol: float = 0.02, rng=None, N: int = 64,
                     dense_limit: int = DENSE_LIMIT) -> float:
    """q with ``tr(K)/n`` close to ``target``, searched on log q.

    Exact (eigenvalues + root finding) when ``n <= dense_limit``, otherwise
    bisection on Monte Carlo root counts with N forests per point.
    """
    if not 0 < target < 1:
        raise ValueError("target ratio must lie in (0, 1)")
    d_avg = g.d_avg
    if d_avg == 0:
        raise ValueError("edgeless graph: tr(K)/n is 1 for every q")
    lo, hi = math.log(1e-6 * d_avg), math.log(1e6 * d_avg)
    if g.n <= dense_limit:
        ratio = _dense_ratio_fn(g)
        f_lo, f_hi = ratio(math.exp(lo)) - target, ratio(math.exp(hi)) - target
        if f_lo > 0 or f_hi < 0:
            raise ValueError(f"no q in [{math.exp(lo):.3g}, {math.exp(hi):.3g}] reaches ratio {target}")
        return math.exp(brentq(lambda lq: ratio(math.exp(lq)) - target, lo, hi, xtol=1e-10))

    rng = np.random.default_rng(rng)

    def est(lq):
        return estimate_basic(g, math.exp(lq), N, rng).mean / g.n

    # tr(K) >= sum_i q/(q+d_i), so this q already reaches the target
    p_ratio = lambda lq: float(np.mean(root_probabilities(g, math.exp(lq)))) - target  # noqa: E731
    if p_ratio(hi) < 0:
        raise ValueError(f"ratio {target} not reachable below q={math.exp(hi):.3g}")
    b = brentq(p_ratio, lo, hi) if p_ratio(lo) < 0 else lo
    a = b
    while est(a) > target:
        a -= math.log(2)
        if a < lo:
            raise ValueError(f"ratio {target} not reachable above q={math.exp(lo):.3g}")
    for _ in range(60):
        mid = 0.5 * (a + b)
        r = est(mid)
        if abs(r - target) <= tol:
            return math.exp(mid)
        a, b = (mid, b) if r < target else (a, mid)
    return math.exp(0.5 * (a + b))


# --- graphs ---------------------------------------------------------------

_SURROGATE = {
    # average degree and triangle-closure probability of the stand-in graph
    "collab_cm": (4, 0.6),
    "citation_hep": (12, 0.3),
    "amazon": (3, 0.4),
}


def full_preset() -> dict:
    """The six benchmark families at full size, as a config dict."""
    return {
        "samples": 100,
        "epsilon": 0.002,
        "seed": 0,
        "scale": 1.0,
        "strata": 5,
        "alpha_policy": "heuristic",
        "methods": ["basic", "cv_tilde", "cv_bar", "stratified", "hutchinson_cg"],
        "q_grid": {"count": 8, "ratio_min": 0.05, "ratio_max": 0.65},
        "graphs": [
            {"name": "barabasi_albert", "family": "ba", "n": 10000, "k": 10},
            {"name": "k_regular", "family": "kreg", "n": 10000, "k": 20},
            {"name": "collab_cm", "family": "snap", "path": "data/CA-CondMat.txt",
             "n": 21363, "m": 91342},
            {"name": "citation_hep", "family": "snap", "path": "data/cit-HepPh.txt",
             "n": 34401, "m": 420828},
            {"name": "grid3d", "family": "grid3d", "side": 50, "periodic": True},
            {"name": "amazon", "family": "snap", "path": "data/amazon0302.txt",
             "n": 262111, "m": 899792},
        ],
    }


def _bfs_subgraph(g: G.Graph, size: int) -> G.Graph:
    """Induced subgraph on the first ``size`` nodes reached by BFS from the max-degree node."""
    order, seen = [], np.zeros(g.n, dtype=bool)
    for start in np.argsort(-g.degrees, kind="stable"):
        if len(order) >= size:
            break
        if seen[start]:
            continue
        seen[start] = True
        queue = [int(start)]
        while queue and len(order) < size:
            u = queue.pop(0)
            order.append(u)
            for v in g.neighbors(u):
                if not seen[v]:
                    seen[v] = True
                    queue.append(int(v))
    keep = np.array(sorted(order))
    remap = np.full(g.n, -1)
    remap[keep] = np.arange(len(keep))
    u, v, w = g.edges()
    sel = (remap[u] >= 0) & (remap[v] >= 0)
    labels = keep if g.labels is None else g.labels[keep]
    return G._from_arrays(len(keep), remap[u[sel]], remap[v[sel]], w[sel], labels=labels, name=g.name)


def build_graph(spec: dict, scale: float = 1.0, seed=None) -> tuple[G.Graph, str]:
    """Instantiate a graph spec; returns the graph and a provenance note."""
    fam = spec["family"]
    name = spec.get("name", fam)
    sized = lambda n: max(int(round(n * scale)), 3)  # noqa: E731
    if fam == "ba":
        k = int(spec.get("k", 10))
        g = G.gen_barabasi_albert(max(sized(spec["n"]), k + 1), k, seed)
    elif fam == "kreg":
        k = int(spec.get("k", 20))
        n = max(sized(spec["n"]), k + 1)
        n += (n * k) % 2
        g = G.gen_k_regular(n, k, seed)
    elif fam == "grid3d":
        side = max(2, int(round(spec.get("side", 50) * scale ** (1 / 3))))
        g = G.gen_grid3d(side, bool(spec.get("periodic", True)))
    elif fam == "grid2d":
        side = max(2, int(round(spec.get("side", 20) * scale ** 0.5)))
        g = G.gen_grid2d(side, periodic=bool(spec.get("periodic", False)))
    elif fam == "path":
        g = G.path_graph(int(spec["n"]))
    elif fam == "complete":
        g = G.complete_graph(int(spec["n"]))
    elif fam == "star":
        g = G.star_graph(int(spec["leaves"]))
    elif fam == "plc":
        g = G.gen_powerlaw_cluster(sized(spec["n"]), int(spec.get("k", 3)), float(spec.get("p", 0.3)), seed)
    elif fam in ("snap", "file"):
        path = spec["path"]
        if os.path.exists(path):
            g = G.load_graph(path) if str(path).endswith(".npz") else G.load_snap(path)
            if scale < 1:
                g = _bfs_subgraph(g, sized(g.n))
                return _named(g, name), f"bfs_subgraph:{path}"
            return _named(g, name), f"file:{path}"
        if "n" not in spec:
            raise FileNotFoundError(path)
        k, p = _SURROGATE.get(name, (max(1, round(spec.get("m", 2 * spec["n"]) / spec["n"])), 0.3))
        log.warning("%s: %s not found, using a powerlaw-cluster surrogate", name, path)
        g = G.gen_powerlaw_cluster(max(sized(spec["n"]), k + 1), k, p, seed)
        return _named(g, name), "surrogate"
    else:
        raise ValueError(f"unknown graph family {fam!r}")
    return _named(g, name), "generated"


def _named(g: G.Graph, name: str) -> G.Graph:
    return replace(g, name=name)


def parse_graph_spec(text: str) -> dict:
    """``family:key=val,...`` or a file path, e.g. ``ba:n=2000,k=10``."""
    if os.path.exists(text) or ":" not in text:
        return {"family": "file", "path": text, "name": os.path.basename(text)}
    fam, _, rest = text.partition(":")
    spec: dict = {"family": fam, "name": fam}
    for item in filter(None, rest.split(",")):
        key, _, val = item.partition("=")
        spec[key] = yaml.safe_load(val)
    return spec


# --- runs -----------------------------------------------------------------

@dataclass
class BenchConfig:
    graphs: list = field(default_factory=list)
    methods: list = field(default_factory=lambda: ["basic", "cv_tilde", "cv_bar", "stratified", "hutchinson_cg"])
    samples: int = 100
    epsilon: float = 0.002
    seed: int = 0
    scale: float = 1.0
    strata: int = 5
    alpha_policy: object = "heuristic"
    q_values: list | None = None
    ratios: list | None = None
    q_grid: dict = field(default_factory=lambda: {"count": 8, "ratio_min": 0.05, "ratio_max": 0.65})
    ref_samples: int = 20000
    dense_limit: int = DENSE_LIMIT
    threads: int = 0
    cg_tol: float = 1e-8

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path: str | os.PathLike) -> BenchConfig:
    with open(path) as fh:
        return BenchConfig.from_dict(yaml.safe_load(fh) or {})


def run_method(g: G.Graph, q: float, method: str, N: int, rng, strata: int = 5,
               alpha_policy="heuristic", threads: bool = False, cg_tol: float = 1e-8) -> EstimateRun:
    if method == "basic":
        return estimate_basic(g, q, N, rng, threads=threads)
    if method in ("cv_tilde", "cv_bar"):
        return estimate_cv(g, q, N, alpha_policy, method[3:], rng, threads=threads)
    if method == "stratified":
        plan = build_strata(g, q, min(strata, N), N)
        return estimate_stratified(g, q, plan, rng, threads=threads)
    if method in ("hutchinson_cg", "girard_cg"):
        kind = "rademacher" if method == "hutchinson_cg" else "gaussian"
        return estimate_probe(g, q, ProbeConfig(kind, N, cg_tol), rng)
    raise ValueError(f"unknown method {method!r}")


def _trace_ref(g, q, cfg: BenchConfig, rng) -> tuple[float, float]:
    if g.n <= cfg.dense_limit:
        return dense_reference(g, q, cfg.dense_limit)[1], 0.0
    run = estimate_cv(g, q, cfg.ref_samples, "heuristic", "bar", rng, threads=bool(cfg.threads))
    return run.mean, run.stderr


def _q_values(g, cfg: BenchConfig, rng) -> list[float]:
    if cfg.q_values:
        return [float(q) for q in cfg.q_values]
    if cfg.ratios:
        return [find_q_for_ratio(g, r, rng=rng, dense_limit=cfg.dense_limit) for r in cfg.ratios]
    grid = cfg.q_grid
    q_lo = find_q_for_ratio(g, grid["ratio_min"], rng=rng, dense_limit=cfg.dense_limit)
    q_hi = find_q_for_ratio(g, grid["ratio_max"], rng=rng, dense_limit=cfg.dense_limit)
    return list(np.geomspace(q_lo, q_hi, int(grid["count"])))


def run_benchmark(cfg: BenchConfig) -> Iterator[dict]:
    """Yield one CSV row (dict) per (graph, q, method) cell."""
    threads = bool(cfg.threads)
    if threads:
        import numba
        numba.set_num_threads(cfg.threads)
    for gi, spec in enumerate(cfg.graphs):
        ss = np.random.SeedSequence([cfg.seed, gi])
        gseed = int(ss.generate_state(1)[0])
        name = spec.get("name", spec.get("family"))
        try:
            g, source = build_graph(spec, cfg.scale, gseed)
            qs = _q_values(g, cfg, np.random.default_rng([cfg.seed, gi, 1]))
        except Exception as exc:  # noqa: BLE001
            log.error("graph %s failed: %s", name, exc)
            yield {"graph": name, "seed": cfg.seed, "error": f"{type(exc).__name__}: {exc}"}
            continue
        log.info("graph %s: n=%d m=%d (%s)", name, g.n, g.m, source)
        for qi, q in enumerate(qs):
            ref, ref_se = _trace_ref(g, q, cfg, np.random.default_rng([cfg.seed, gi, qi, 99]))
            for mi, method in enumerate(cfg.methods):
                row = {"graph": name, "n": g.n, "m": g.m, "q": q, "ratio": ref / g.n,
                       "method": method, "seed": cfg.seed, "trace_ref": ref, "trace_ref_stderr": ref_se}
                flags = [] if source == "generated" else [source.split(":")[0]]
                try:
                    rng = np.random.default_rng([cfg.seed, gi, qi, mi])
                    t0 = time.perf_counter()
                    run = run_method(g, q, method, cfg.samples, rng, cfg.strata, cfg.alpha_policy,
                                     threads, cfg.cg_tol)
                    k, secs, kflags = effective_runtime(run, ref, cfg.epsilon)
                    flags += kflags
                    if threads and method not in ("hutchinson_cg", "girard_cg"):
                        flags.append("cpu_time")
                    if run.extra.get("plan") is not None and run.extra["plan"].merged:
                        flags.append("strata_merged")
                    if run.extra.get("converged") is False:
                        flags.append("cg_not_converged")
                    row.update(mean=run.mean, stderr=run.stderr, t_per_sample=run.time_per_sample,
                               k=k, effective_runtime_s=secs,
                               # k scales as tr_ref**-2
                               k_rel_err=2 * ref_se / ref)
                    log.debug("%s q=%.4g %s: %.4g +- %.3g (%.2fs)", name, q, method, run.mean,
                              run.stderr, time.perf_counter() - t0)
                except Exception as exc:  # noqa: BLE001
                    log.error("%s q=%.4g %s failed: %s", name, q, method, exc)
                    row["error"] = f"{type(exc).__name__}: {exc}"
                row["flags"] = ";".join(flags)
                yield row


def write_csv(rows, fh) -> int:
    """Write rows with the fixed header; returns the number of failed cells."""
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    failures = 0
    for row in rows:
        failures += bool(row.get("error"))
        writer.writerow({c: _fmt(row.get(c, "")) for c in CSV_COLUMNS})
        fh.flush()
    return failures


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path) -> list[dict]:
    """Parse a benchmark CSV back into typed rows."""
    ints = {"n", "m", "k", "seed"}
    floats = {"q", "ratio", "mean", "stderr", "t_per_sample", "effective_runtime_s",
              "trace_ref", "trace_ref_stderr", "k_rel_err"}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            for key in ints:
                row[key] = int(row[key]) if row[key] != "" else None
            for key in floats:
                row[key] = float(row[key]) if row[key] != "" else None
            out.append(row)
    return out


def check_consistency(rows: list[dict], z: float = 5.0) -> list[tuple]:
    """Pairs of methods in the same cell whose means differ by more than ``z`` joint stderr."""
    cells: dict = {}
    for r in rows:
        if not r.get("error"):
            cells.setdefault((r["graph"], r["q"]), []).append(r)
    bad = []
    for key, rs in cells.items():
        for i in range(len(rs)):
            for j in range(i + 1, len(rs)):
                a, b = rs[i], rs[j]
                se = math.hypot(a["stderr"], b["stderr"])
                if abs(a["mean"] - b["mean"]) > z * se + 1e-9 * abs(a["mean"]):
                    bad.append((key, a["method"], b["method"], a["mean"], b["mean"], se))
    return bad
