"""Score-based and variable-based calibration error, plots and recalibration."""

__version__ = "0.1.0"

from .data import Dataset, PredictionRecord, confidence_and_prediction, load_predictions, write_predictions
from .metrics import (
    BinningScheme,
    BinSummary,
    DiagnosisReport,
    assign_bins,
    ece_hat,
    rank_variables,
    reliability_data,
    variable_curve_data,
    vce_point,
    vece_hat,
    worst_case_vce,
)
from .loess import CurveEstimate, LoessConfig, calibration_curves, fit_loess, max_curve_gap

__all__ = [
    "BinSummary", "BinningScheme", "CurveEstimate", "Dataset", "DiagnosisReport", "LoessConfig",
    "PredictionRecord", "assign_bins", "calibration_curves", "confidence_and_prediction", "ece_hat",
    "fit_loess", "load_predictions", "max_curve_gap", "rank_variables", "reliability_data",
    "variable_curve_data", "vce_point", "vece_hat", "worst_case_vce", "write_predictions",
]
