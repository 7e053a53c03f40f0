"""Mask-sequence evaluation and existence gating for referred video objects.

The package splits into a binary mask data model (`masks`), region/boundary
metrics with presence accounting (`metrics`), a trainable existence head with
threshold gating and sweeps (`gating`), synthetic scenario generation with
brute-force reference implementations (`synth`), dataset file formats
(`manifest`), report emission (`reports`), and the `gateseg` command line
(`cli`).
"""
from .errors import (
    DataError,
    FormatError,
    GatesegError,
    MetricUndefinedError,
    TrainingError,
    ValidationError,
)
from .gating import (
    DEFAULT_TAU,
    Dataset,
    ExistenceHead,
    FeatureTensor,
    GatingConfig,
    HeadGradients,
    SweepResult,
    TrainConfig,
    TrainResult,
    apply_gate,
    bce_loss,
    dataset_loss,
    forward,
    gate_query,
    gradients,
    pool_features,
    sigmoid,
    sweep,
    tau_grid,
    train,
)
from .manifest import (
    EvalOptions,
    Manifest,
    ManifestQuery,
    export_scenario,
    load_head,
    load_manifest,
    load_mask_source,
    load_query,
    load_train_features,
    save_head,
    save_train_features,
)
from .masks import (
    Mask,
    MaskSequence,
    RleMask,
    binarize,
    indicator,
    rle_decode,
    rle_encode,
    rle_from_json,
    rle_to_json,
    union_masks,
    union_sequences,
)
from .metrics import (
    DEFAULT_POLICY,
    EMPTY_GT_POLICIES,
    POLICY_EXCLUDE,
    POLICY_FULL_CREDIT,
    AggregateReport,
    ConfusionCounts,
    QueryMetrics,
    SequenceScores,
    aggregate,
    aggregate_metrics,
    boundary_f,
    default_radius,
    extract_boundary,
    final_score,
    n_acc,
    presence_confusion,
    region_j,
    score_query,
    sequence_scores,
    t_acc,
)
from .queries import QueryRecord
from .synth import (
    RNG_ALGORITHM,
    SCENARIO_PRESETS,
    Scenario,
    ScenarioConfig,
    finite_diff_grads,
    gen_scenario,
    oracle_boundary_f,
    oracle_sweep,
    perturb_mask,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateReport",
    "ConfusionCounts",
    "DEFAULT_POLICY",
    "DEFAULT_TAU",
    "DataError",
    "Dataset",
    "EMPTY_GT_POLICIES",
    "EvalOptions",
    "ExistenceHead",
    "FeatureTensor",
    "FormatError",
    "GatesegError",
    "GatingConfig",
    "HeadGradients",
    "Manifest",
    "ManifestQuery",
    "Mask",
    "MaskSequence",
    "MetricUndefinedError",
    "POLICY_EXCLUDE",
    "POLICY_FULL_CREDIT",
    "QueryMetrics",
    "QueryRecord",
    "RNG_ALGORITHM",
    "RleMask",
    "SCENARIO_PRESETS",
    "Scenario",
    "ScenarioConfig",
    "SequenceScores",
    "SweepResult",
    "TrainConfig",
    "TrainResult",
    "TrainingError",
    "ValidationError",
    "aggregate",
    "aggregate_metrics",
    "apply_gate",
    "bce_loss",
    "binarize",
    "boundary_f",
    "dataset_loss",
    "default_radius",
    "export_scenario",
    "extract_boundary",
    "final_score",
    "finite_diff_grads",
    "forward",
    "gate_query",
    "gen_scenario",
    "gradients",
    "indicator",
    "load_head",
    "load_manifest",
    "load_mask_source",
    "load_query",
    "load_train_features",
    "n_acc",
    "oracle_boundary_f",
    "oracle_sweep",
    "perturb_mask",
    "pool_features",
    "presence_confusion",
    "region_j",
    "rle_decode",
    "rle_encode",
    "rle_from_json",
    "rle_to_json",
    "save_head",
    "save_train_features",
    "score_query",
    "sequence_scores",
    "sigmoid",
    "sweep",
    "t_acc",
    "tau_grid",
    "train",
    "union_masks",
    "union_sequences",
    "__version__",
]
