"""Random spanning forest estimators of tr(q (L + qI)^-1) for graph Laplacians."""

from .baselines import ProbeConfig, dense_reference, estimate_probe, smooth, solve_shifted
from .estimators import (
    EstimateRun,
    StrataPlan,
    alpha_heuristic,
    alpha_safe,
    build_strata,
    cv_sample,
    estimate_basic,
    estimate_cv,
    estimate_stratified,
    poisson_binomial_exact,
    poisson_binomial_normal,
    sample_root_set,
)
from .forest import ForestSample, sample_forest, sample_forest_conditional
from .graph import (
    Graph,
    from_edge_list,
    gen_barabasi_albert,
    gen_grid2d,
    gen_grid3d,
    gen_k_regular,
    laplacian_apply,
    load_graph,
    load_snap,
    save_graph,
)

__version__ = "0.1.0"
