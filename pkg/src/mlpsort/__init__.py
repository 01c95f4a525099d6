"""Multi-level parallel sorting algorithms on a simulated bulk-synchronous
message-passing machine with an explicit communication cost ledger."""

from .ams import (
    AmsParams,
    GroupPlan,
    ams_sort,
    draw_sample,
    optimal_group_plan,
    partition_buckets,
    scan_groups,
    select_splitters,
)
from .bench import ExperimentConfig, generate_input, run_experiment, sweep
from .core import (
    Element,
    PseudorandomPermutation,
    SeedSpec,
    compare_tiebreak,
    feistel_apply,
    feistel_new,
)
from .delivery import (
    DeliveryPlan,
    DeliveryResult,
    deliver,
    deliver_deterministic,
    deliver_randomized,
    deliver_simple,
    deliver_simple_permuted,
)
from .fastsort import GridShape, RankedElement, extract_by_ranks, fast_rank_sort, grid_shape
from .multiselect import SelectionResult, multiselect, multiselect_many
from .rlm import LevelPlan, merge_runs, rlm_sort
from .simnet import CostLedger, CostParams, ExchStats, Network, PeGroup

__all__ = [
    "AmsParams", "CostLedger", "CostParams", "DeliveryPlan", "DeliveryResult",
    "Element", "ExchStats", "ExperimentConfig", "GridShape", "GroupPlan",
    "LevelPlan", "Network", "PeGroup", "PseudorandomPermutation",
    "RankedElement", "SeedSpec", "SelectionResult", "ams_sort",
    "compare_tiebreak", "deliver", "deliver_deterministic",
    "deliver_randomized", "deliver_simple", "deliver_simple_permuted",
    "draw_sample", "extract_by_ranks", "fast_rank_sort", "feistel_apply",
    "feistel_new", "generate_input", "grid_shape", "merge_runs",
    "multiselect", "multiselect_many", "optimal_group_plan",
    "partition_buckets", "rlm_sort", "run_experiment", "scan_groups",
    "select_splitters", "sweep",
]
