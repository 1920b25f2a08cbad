"""
Effective runtime benchmark
===========================

Each estimator needs k = ceil((sigma_1 / (eps * tr))^2) samples to reach
relative error eps, so k times the time per sample compares methods on equal
footing. This runs the full preset at a tiny scale and prints a summary; the
same thing is available as `rsftrace bench --scale 0.005`.
"""

import numpy as np

from rsftrace import bench

cfg = bench.BenchConfig.from_dict(bench.full_preset())
cfg.scale = 0.005
rows = list(bench.run_benchmark(cfg))

print(f"{len(rows)} cells, {len(bench.check_consistency(rows))} inconsistent pairs\n")
print(f"{'graph':16s}" + "".join(f"{m:>15s}" for m in cfg.methods))
for name in dict.fromkeys(r["graph"] for r in rows):
    line = f"{name:16s}"
    for m in cfg.methods:
        eff = [r["effective_runtime_s"] for r in rows if r["graph"] == name and r["method"] == m]
        line += f"{np.median(eff):15.2e}"
    print(line)
print("\nmedian effective runtime over the q grid, seconds")
