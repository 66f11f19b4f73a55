from .hierarchy import (
    HierarchicalPredictor,
    StageResult,
    UntrainedStageError,
    load_predictor,
    predict_hierarchical,
    save_predictor,
    train_hierarchical,
)
from .report import ReportError, make_report
from .robustness import DEFAULT_SCENARIOS, RobustnessReport, evaluate_robustness
from .steps import (
    CalibrationError,
    LayerCalibration,
    StepAnalysis,
    count_steps,
    estimate_layers_from_steps,
    fit_layer_calibration,
)

__all__ = [
    "CalibrationError", "DEFAULT_SCENARIOS", "HierarchicalPredictor", "LayerCalibration",
    "ReportError", "RobustnessReport", "StageResult", "StepAnalysis", "UntrainedStageError",
    "count_steps", "estimate_layers_from_steps", "evaluate_robustness", "fit_layer_calibration",
    "load_predictor", "make_report", "predict_hierarchical", "save_predictor", "train_hierarchical",
]
