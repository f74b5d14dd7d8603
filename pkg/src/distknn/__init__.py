"""Distributed adaptive nearest-neighbor classification toolkit.

Exact per-shard neighbor search, weighted cross-shard aggregation, a
data-driven choice of neighbor counts with an early-stopping search rule, the
standard comparison classifiers, and a benchmark harness for synthetic and
census-income experiments.
"""

from .adaptive import (
    AdaptiveSelection,
    StopReason,
    StoppingConfig,
    adaptive_select,
    k1_bound,
    stopping_statistic,
    stopping_threshold,
    sub_k,
)
from .baselines import (
    BASELINE_KINDS,
    ClassifierKind,
    d1nn_classify,
    dann_nes_select,
    dnn_qiao_classify,
    qiao_k,
)
from .engine import Partition, evaluate_queries, evaluate_query, profile_partition
from .estimator import AggregateEstimate, LocalEstimate, aggregate, classify, local_estimate
from .neighbors import (
    LabeledPoint,
    NeighborProfile,
    ProfileBatch,
    Shard,
    brute_force_profile,
    euclidean_distance,
    neighbor_profile,
)
from .realdata import (
    AdultRecord,
    DatasetSplit,
    evaluate_real,
    ingest_adult,
    scale_features,
    train_test_split,
)
from .simharness import (
    ExperimentConfig,
    ExperimentResult,
    ResultRow,
    SyntheticModel,
    bayes_classify,
    eta_true,
    generate_sample,
    partition_proportional,
    partition_uniform,
    run_experiment,
    shard_count,
)

__version__ = "0.1.0"
