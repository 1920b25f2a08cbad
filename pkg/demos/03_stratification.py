"""
Stratifying on the number of first-visit roots
==============================================

Whether a node becomes a root the first time the walk reaches it is an
independent coin flip with probability q/(q+d_i). The count of such roots
follows a Poisson-binomial law, which we can cut into strata of roughly equal
mass and sample each stratum separately.
"""

import numpy as np

from rsftrace import build_strata, estimate_basic, estimate_stratified, poisson_binomial_exact
from rsftrace.bench import find_q_for_ratio
from rsftrace.forest import root_probabilities
from rsftrace.graph import gen_barabasi_albert

g = gen_barabasi_albert(2000, 10, 0)
q = find_q_for_ratio(g, 0.3)
pmf = poisson_binomial_exact(root_probabilities(g, q))
print(f"{g.name}, q={q:.3f}: first-visit root count has mean {pmf @ np.arange(len(pmf)):.1f}")

plan = build_strata(g, q, K=5, N=2000)
for lo, hi, p, nk in zip(plan.lo, plan.hi, plan.probs, plan.alloc):
    print(f"  stratum [{lo}, {hi}]  mass {p:.3f}  samples {nk}")

rng = np.random.default_rng(2)
st = estimate_stratified(g, q, plan, rng)
basic = estimate_basic(g, q, 2000, rng)
print(f"plain      {basic.mean:8.2f} +- {basic.stderr:.2f}")
print(f"stratified {st.mean:8.2f} +- {st.stderr:.2f}")
print(f"variance ratio {st.var / basic.var:.3f}")
