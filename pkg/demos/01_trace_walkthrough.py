"""
Estimating tr(K) from random forests
====================================

K = q (L + qI)^-1 is the smoothing operator of a graph. Its trace counts the
"effective number of degrees of freedom" kept at scale q. The number of roots
of a random spanning forest is an unbiased estimate of that trace.
"""

import numpy as np

from rsftrace import dense_reference, estimate_basic, sample_forest
from rsftrace.graph import gen_grid2d, path_graph
from rsftrace.oracle import enumerate_forests

# Start tiny. Two nodes and one edge have exactly three rooted forests:
# both nodes as roots, or one tree rooted at either end.
g = path_graph(2)
enum = enumerate_forests(g, q=1.0)
for parent, p in zip(enum.parents, enum.probabilities):
    print("parent", parent, "prob", round(p, 4))
print("Z =", enum.partition_function, "det(L + I) =", np.linalg.det([[2, -1], [-1, 2]]))

# One forest on a 20x20 grid. parent[i] == i marks a root.
rng = np.random.default_rng(0)
grid = gen_grid2d(20)
f = sample_forest(grid, q=0.5, rng=rng)
print(f"\none forest: {f.n_roots} roots, {len(f.tree_sizes)} trees, {f.steps} walk steps")

# The average root count converges to the exact trace.
_, exact = dense_reference(grid, 0.5)
for N in (10, 100, 1000, 10000):
    run = estimate_basic(grid, 0.5, N, rng)
    print(f"N={N:5d}  estimate {run.mean:8.3f} +- {run.stderr:.3f}   exact {exact:.3f}")
