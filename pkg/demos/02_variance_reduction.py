"""
Control variates
================

Beyond counting roots, each forest also yields a quantity c whose mean is
exactly zero. Adding alpha * c to the root count removes a large part of the
noise. Two flavours exist: c_tilde only looks at the roots' neighbourhoods,
c_bar averages over whole trees and costs one pass over the edges.
"""

import numpy as np

from rsftrace import alpha_heuristic, dense_reference, estimate_cv
from rsftrace.bench import find_q_for_ratio
from rsftrace.graph import gen_grid3d, gen_k_regular, path_graph
from rsftrace.oracle import enumerate_forests, exact_stats

# On two nodes the best alpha makes the estimator exact.
g = path_graph(2)
st = exact_stats(enumerate_forests(g, 1.0), g, 1.0, alpha=1 / 3)
print(f"P2: alpha* = {st.alpha_star_tilde:.4f}, variance at alpha* = {st.var_s_tilde:.1e}")

rng = np.random.default_rng(1)
for g in (gen_grid3d(10), gen_k_regular(2000, 20, 0)):
    q = find_q_for_ratio(g, 0.3)
    _, exact = dense_reference(g, q)
    run = estimate_cv(g, q, 2000, "heuristic", "tilde", rng)
    roots = run.extra["roots"]
    s_bar = roots + run.extra["alpha"] * run.extra["c_bar"]
    print(f"\n{g.name}: q={q:.3f}, alpha={alpha_heuristic(g, q):.3f}, exact trace {exact:.2f}")
    for label, x in (("roots", roots), ("s_tilde", run.values), ("s_bar", s_bar)):
        print(f"  {label:8s} mean {x.mean():9.3f}  variance {x.var(ddof=1):9.3f}")
