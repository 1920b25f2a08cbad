"""Command line entry point: ``rsftrace {gen,estimate,bench,oracle}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import nullcontext

import numpy as np

from . import bench, oracle
from .baselines import dense_reference
from .graph import Graph, save_graph

log = logging.getLogger("rsftrace")


def _graph(args) -> Graph:
    g, source = bench.build_graph(bench.parse_graph_spec(args.graph), args.scale, args.seed)
    log.info("graph %s: n=%d m=%d (%s)", g.name, g.n, g.m, source)
    return g


def _alpha_policy(text):
    try:
        return float(text)
    except ValueError:
        return text


def cmd_gen(args) -> int:
    g = _graph(args)
    if args.out.endswith(".npz"):
        save_graph(g, args.out)
    else:
        u, v, w = g.edges()
        with open(args.out, "w") as fh:
            fh.write(f"# {g.name} n={g.n} m={g.m}\n")
            for a, b, c in zip(u, v, w):
                fh.write(f"{a} {b}\n" if c == 1 else f"{a} {b} {c!r}\n")
    print(json.dumps({"name": g.name, "n": g.n, "m": g.m, "out": args.out}))
    return 0


def cmd_estimate(args) -> int:
    g = _graph(args)
    rng = np.random.default_rng(args.seed)
    q = args.q if args.q is not None else bench.find_q_for_ratio(g, args.ratio, rng=rng)
    cfg = bench.BenchConfig(
        graphs=[], methods=args.method, samples=args.samples, epsilon=args.epsilon, seed=args.seed,
        strata=args.strata, alpha_policy=_alpha_policy(args.alpha_policy), q_values=[q],
        threads=args.threads,
    )
    ref, ref_se = bench._trace_ref(g, q, cfg, np.random.default_rng([args.seed, 99]))
    rows = []
    for mi, method in enumerate(args.method):
        run = bench.run_method(g, q, method, args.samples, np.random.default_rng([args.seed, mi]),
                               args.strata, cfg.alpha_policy, bool(args.threads))
        k, secs, flags = bench.effective_runtime(run, ref, args.epsilon)
        rows.append({"graph": g.name, "n": g.n, "m": g.m, "q": q, "ratio": ref / g.n, "method": method,
                     "mean": run.mean, "stderr": run.stderr, "t_per_sample": run.time_per_sample,
                     "k": k, "effective_runtime_s": secs, "seed": args.seed, "trace_ref": ref,
                     "trace_ref_stderr": ref_se, "k_rel_err": 2 * ref_se / ref, "flags": ";".join(flags)})
    with (open(args.out, "w", newline="") if args.out else nullcontext(sys.stdout)) as fh:
        bench.write_csv(rows, fh)
    return 0


def cmd_bench(args) -> int:
    if args.config:
        cfg = bench.load_config(args.config)
    else:
        cfg = bench.BenchConfig.from_dict(bench.full_preset())
    overrides = {
        "scale": args.scale, "samples": args.samples, "epsilon": args.epsilon, "seed": args.seed,
        "strata": args.strata, "threads": args.threads,
        "methods": args.method, "alpha_policy": _alpha_policy(args.alpha_policy) if args.alpha_policy else None,
        "q_values": args.q, "ratios": args.ratio,
    }
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    if args.graph:
        cfg.graphs = [bench.parse_graph_spec(s) for s in args.graph]
    with (open(args.out, "w", newline="") if args.out else nullcontext(sys.stdout)) as fh:
        failures = bench.write_csv(bench.run_benchmark(cfg), fh)
    if failures:
        log.error("%d benchmark cells failed", failures)
    return 1 if failures else 0


def cmd_oracle(args) -> int:
    g = _graph(args)
    enum = oracle.enumerate_forests(g, args.q)
    stats = oracle.exact_stats(enum, g, args.q, args.alpha)
    L = oracle.dense_laplacian(g)
    out = {
        "graph": g.name, "n": g.n, "m": g.m, "q": args.q,
        "forests": len(enum.weights),
        "partition_function": enum.partition_function,
        "det_L_plus_qI": float(np.linalg.det(L + args.q * np.eye(g.n))),
        "trace_K": dense_reference(g, args.q)[1],
        **{k: float(v) for k, v in vars(stats).items()},
    }
    print(json.dumps(out, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rsftrace", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--graph", required=True,
                        help="family:key=val,... (ba, kreg, grid3d, grid2d, plc, path, complete, star) or an edge-list/.npz path")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--scale", type=float, default=1.0)
        sp.add_argument("--out", default=None)

    sp = sub.add_parser("gen", help="generate a graph and write it out")
    common(sp)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("estimate", help="run estimators on one graph at one q")
    common(sp)
    grp = sp.add_mutually_exclusive_group(required=True)
    grp.add_argument("--q", type=float)
    grp.add_argument("--ratio", type=float, help="pick q so that tr(K)/n matches")
    sp.add_argument("--method", nargs="+", default=["basic"], choices=bench.METHODS)
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--epsilon", type=float, default=0.002)
    sp.add_argument("--strata", type=int, default=5)
    sp.add_argument("--alpha-policy", default="heuristic", help="heuristic, safe or a number")
    sp.add_argument("--threads", type=int, default=0)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("bench", help="effective-runtime benchmark, CSV output")
    sp.add_argument("--config", help="YAML config; defaults to the full-size preset")
    sp.add_argument("--graph", nargs="+", help="override the config's graph list")
    sp.add_argument("--q", type=float, nargs="+")
    sp.add_argument("--ratio", type=float, nargs="+")
    sp.add_argument("--method", nargs="+", choices=bench.METHODS)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--strata", type=int)
    sp.add_argument("--alpha-policy")
    sp.add_argument("--scale", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--threads", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("oracle", help="exact forest enumeration on a tiny graph")
    common(sp)
    sp.add_argument("--q", type=float, default=1.0)
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
