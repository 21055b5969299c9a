"""flowgauge: dataset auditing and exact-kNN baselining for packet-sequence
traffic classification.

The package measures how much of a dataset is duplicated packet sequences,
how those duplicates cap achievable accuracy and floor the false-positive
rate, and how a simple L1 nearest-neighbor baseline scores under random,
time-based, disjoint-entity, and fixed splits.
"""

__version__ = "0.1.0"

from .errors import DataError, UsageError
from .features import (
    FeatureVector,
    ScalingConfig,
    default_config,
    featurize,
    featurize_flows,
    l1_distance,
)
from .ingest import FileFormat, IngestReport, load_dataset, save_dataset, summarize
from .knn import (
    NeighborIndex,
    Prediction,
    VotingConfig,
    build,
    evaluate,
    load_index,
    predict_top1,
    predict_top1_batch,
    predict_vote,
    predict_vote_batch,
    save_index,
)
from .metrics import (
    CorrelationResult,
    EvalResult,
    accuracy,
    gap,
    max_achievable_accuracy,
    mean_std,
    minimal_fpr,
    spearman,
    weighted_f1,
)
from .model import (
    CAPTURE_CAP,
    CanonicalKey,
    Dataset,
    FlowRecord,
    KeyVariant,
    canonical_key,
)
from .redundancy import (
    DuplicateCluster,
    EcdfCurves,
    HeatmapRow,
    RedundancyReport,
    cluster_duplicates,
    ecdf_by_length,
    heatmap_by_length,
    redundancy_fraction,
)
from .splits import (
    Partition,
    RepeatedSplits,
    SplitPlan,
    SplitStrategy,
    disjoint_key_split,
    fixed_split,
    random_split,
    repeat,
    time_split,
)
from .tuning import SearchSpace, TrialResult, sample_configs, tune, tune_voting

__all__ = [name for name in dir() if not name.startswith("_")]
