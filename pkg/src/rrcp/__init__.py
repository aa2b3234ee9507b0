"""Conformal prediction sets with reliable-region calibration.

The toolkit starts at classifier probability outputs: calibrate one of three
methods (classic split CP, cumulative-score CP, or reliable-region CP) on a
labeled calibration split, then emit per-sample prediction sets whose
coverage is statistically guaranteed at a user-chosen error rate.
"""

__version__ = "0.1.0"

from .baselines import (
    ApsCpModel,
    ClassicCpModel,
    calibrate_aps,
    calibrate_classic,
    finite_sample_quantile,
    predict_aps,
    predict_classic,
)
from .core import (
    Dataset,
    LabeledSample,
    PredictionSet,
    ProbabilityVector,
    RenormalizationWarning,
    SortedPrediction,
    ValidationError,
    aps_score,
    classic_score,
    prediction_set,
    set_confidence,
    sort_probabilities,
)
from .evaluation import (
    CoverageSummary,
    EvaluationReport,
    SyntheticSpec,
    actual_error_rate,
    coverage_bound_check,
    generate_synthetic,
    mean_set_size,
    run_experiment,
)
from .fileio import (
    FileFormatError,
    load_model,
    load_probability_file,
    save_model,
    save_probability_file,
)
from .reliability import (
    ConfidenceTable,
    ReliabilityVerdict,
    RrcpModel,
    build_confidence_table,
    check_region,
    estimate_thresholds,
    rrcp_predict,
)

__all__ = [
    "ApsCpModel",
    "ClassicCpModel",
    "ConfidenceTable",
    "CoverageSummary",
    "Dataset",
    "EvaluationReport",
    "FileFormatError",
    "LabeledSample",
    "PredictionSet",
    "ProbabilityVector",
    "ReliabilityVerdict",
    "RenormalizationWarning",
    "RrcpModel",
    "SortedPrediction",
    "SyntheticSpec",
    "ValidationError",
    "actual_error_rate",
    "aps_score",
    "build_confidence_table",
    "calibrate_aps",
    "calibrate_classic",
    "check_region",
    "classic_score",
    "coverage_bound_check",
    "estimate_thresholds",
    "finite_sample_quantile",
    "generate_synthetic",
    "load_model",
    "load_probability_file",
    "mean_set_size",
    "predict_aps",
    "predict_classic",
    "prediction_set",
    "rrcp_predict",
    "run_experiment",
    "save_model",
    "save_probability_file",
    "set_confidence",
    "sort_probabilities",
]
