from .search_space import (
    PRESETS,
    SearchSpace,
    build_space,
    canonicalize,
    enumerate_space,
    flops,
    load_space,
    params,
    random_arch,
)
from .mct import (
    MctTree,
    backpropagate,
    load_tree,
    new_tree,
    restore,
    sample_path,
    save_tree,
    snapshot,
)
from .evaluators import (
    BenchmarkTable,
    SurrogateTrainer,
    SyntheticOracle,
    TabularOracle,
    build_evaluator,
    build_trainer,
    generate_benchmark,
    generate_synthetic,
    load_benchmark,
    save_benchmark,
)
from .training import FlopsBounds, run_training, sample_with_flops_budget
from .search import hierarchical_search, search_cost
from .baselines import evolutionary_search, marginal_greedy, random_search
from .metrics import Ranking, avg_percentile_rank, cost_correlations, kendall_tau, rank_table, spearman_rho

__all__ = [
    "PRESETS",
    "SearchSpace",
    "build_space",
    "canonicalize",
    "enumerate_space",
    "flops",
    "load_space",
    "params",
    "random_arch",
    "MctTree",
    "backpropagate",
    "load_tree",
    "new_tree",
    "restore",
    "sample_path",
    "save_tree",
    "snapshot",
    "BenchmarkTable",
    "SurrogateTrainer",
    "SyntheticOracle",
    "TabularOracle",
    "build_evaluator",
    "build_trainer",
    "generate_benchmark",
    "generate_synthetic",
    "load_benchmark",
    "save_benchmark",
    "FlopsBounds",
    "run_training",
    "sample_with_flops_budget",
    "hierarchical_search",
    "search_cost",
    "evolutionary_search",
    "marginal_greedy",
    "random_search",
    "Ranking",
    "avg_percentile_rank",
    "cost_correlations",
    "kendall_tau",
    "rank_table",
    "spearman_rho",
]
