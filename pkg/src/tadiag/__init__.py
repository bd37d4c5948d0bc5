"""Diagnosis of temporal action detectors: normalized metrics, false-positive
taxonomy, characteristic sensitivity and false-negative analysis."""

__version__ = "0.1.0"

from .analysis import (  # noqa: E402
    FNReport,
    SensitivityProfile,
    average_fn_reports,
    characteristic_distribution,
    detected_instances,
    false_negatives,
    sensitivity_profile,
    subset_evaluation,
)
from .dataset import (  # noqa: E402
    CHARACTERISTICS,
    CharacteristicProfile,
    Dataset,
    GroundTruthInstance,
    Prediction,
    PredictionSet,
    TemporalSegment,
    ValidationError,
    VideoRecord,
    compute_agreement,
    compute_coverage,
    derive_characteristics,
    tiou,
    validate_dataset,
)
from .diagnosis import (  # noqa: E402
    CATEGORIES,
    FP_CATEGORIES,
    ErrorCategory,
    ErrorImpact,
    ErrorVerdict,
    FPProfile,
    build_fp_profile,
    classify_fp,
    classify_predictions,
    error_impact,
)
from .io import (  # noqa: E402
    InputError,
    attach_characteristics,
    load_characteristics,
    load_ground_truth,
    load_predictions,
    parse_predictions,
)
from .metrics import (  # noqa: E402
    EvaluationConfig,
    MetricSummary,
    PRCurve,
    average_map,
    interpolated_ap,
    match_predictions,
    pr_curve,
    truncate_top_k,
)
from .report import Diagnosis, diagnose, run_diagnosis  # noqa: E402
from .synthetic import InfeasibleSpecError, SyntheticSpec, generate_synthetic  # noqa: E402

__all__ = [
    "__version__",
    "CATEGORIES",
    "CHARACTERISTICS",
    "CharacteristicProfile",
    "Dataset",
    "Diagnosis",
    "ErrorCategory",
    "ErrorImpact",
    "ErrorVerdict",
    "EvaluationConfig",
    "FNReport",
    "FPProfile",
    "FP_CATEGORIES",
    "GroundTruthInstance",
    "InfeasibleSpecError",
    "InputError",
    "MetricSummary",
    "PRCurve",
    "Prediction",
    "PredictionSet",
    "SensitivityProfile",
    "SyntheticSpec",
    "TemporalSegment",
    "ValidationError",
    "VideoRecord",
    "attach_characteristics",
    "average_fn_reports",
    "average_map",
    "build_fp_profile",
    "characteristic_distribution",
    "classify_fp",
    "classify_predictions",
    "compute_agreement",
    "compute_coverage",
    "derive_characteristics",
    "detected_instances",
    "diagnose",
    "error_impact",
    "false_negatives",
    "generate_synthetic",
    "interpolated_ap",
    "load_characteristics",
    "load_ground_truth",
    "load_predictions",
    "match_predictions",
    "parse_predictions",
    "pr_curve",
    "run_diagnosis",
    "sensitivity_profile",
    "subset_evaluation",
    "tiou",
    "truncate_top_k",
    "validate_dataset",
]
