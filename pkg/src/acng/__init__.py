"""Proximity graphs whose greedy routing provably converges to the exact nearest neighbor."""

from acng.construction import BuildReport, CandidatePool, CngParams, build_cng, prepare_candidates, repair_connectivity
from acng.core import (
    Dataset,
    DatasetStats,
    Metric,
    ProximityGraph,
    compute_stats,
    distance,
    read_fvecs,
    read_ivecs,
    write_fvecs,
    write_ivecs,
)
from acng.errors import (
    AcngError,
    ConstructionError,
    DataFormatError,
    PreconditionError,
    UsageError,
    VerificationError,
)
from acng.eval import EvalRecord, GroundTruth, compute_ground_truth, recall_at_k, sweep, tune_tau
from acng.exact import (
    ExactBuildParams,
    build_exact,
    mutual_exclusion_violations,
    verify_alpha_reducible,
    verify_shortcut_reachable,
)
from acng.knn import KnnParams, build_knn_graph
from acng.pruning import AdaptiveSchedule, PruneRule, RuleKind, adaptive_prune, prune_candidates
from acng.search import SearchParams, SearchStats, beam_search, batch_search, greedy_route

__version__ = "0.1.0"
