"""Conformal anomaly detection with resampling calibration and FDR control.

One-class scorers (Isolation Forest, LOF, PCA reconstruction error) are
calibrated via split, leave-one-out, cross-validation or bootstrap
resampling to emit marginally valid conformal p-values; the
Benjamini-Hochberg procedure then controls the batch false discovery rate
at a nominal level.
"""

from .bench import (
    ExperimentConfig,
    ExperimentReport,
    LabeledDataset,
    format_reports,
    load_csv,
    make_synthetic,
    run_calibration_sweep,
    run_experiment,
)
from .conformal import (
    Aggregation,
    CalibratedDetector,
    Strategy,
    StrategyKind,
    aggregate,
    calibrate,
    parse_method,
    predict_p_values,
    smoothed_p_value,
)
from .core import PlanKind, ResamplePlan, as_feature_matrix, child_seed, make_plan, random_partition
from .detectors import Algorithm, DetectorConfig, fit, score
from .multiplicity import BhResult, benjamini_hochberg, bh_adjust, bh_reject, fdp, power
from .serialize import ModelFileError, load_detector, save_detector

__version__ = "0.1.0"

__all__ = [
    "Aggregation",
    "Algorithm",
    "BhResult",
    "CalibratedDetector",
    "benjamini_hochberg",
    "DetectorConfig",
    "ExperimentConfig",
    "ExperimentReport",
    "LabeledDataset",
    "ModelFileError",
    "PlanKind",
    "ResamplePlan",
    "Strategy",
    "StrategyKind",
    "aggregate",
    "as_feature_matrix",
    "bh_adjust",
    "bh_reject",
    "calibrate",
    "child_seed",
    "fdp",
    "fit",
    "format_reports",
    "load_csv",
    "load_detector",
    "make_plan",
    "make_synthetic",
    "parse_method",
    "power",
    "predict_p_values",
    "random_partition",
    "run_calibration_sweep",
    "run_experiment",
    "save_detector",
    "score",
    "smoothed_p_value",
    "__version__",
]
