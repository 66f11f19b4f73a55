from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .model import CnnModel, CnnSpec, ShapeError, cross_entropy, forward, loss_and_gradients, softmax
from .optim import AdamConfig, AdamState, adam_step
from .training import (
    EvalReport,
    TrainConfig,
    TrainingError,
    cross_validate,
    predict_proba,
    stratified_kfold,
    train,
)

__all__ = [
    "AdamConfig", "AdamState", "CheckpointError", "CnnModel", "CnnSpec", "EvalReport", "ShapeError",
    "TrainConfig", "TrainingError", "adam_step", "cross_entropy", "cross_validate", "forward",
    "load_checkpoint", "loss_and_gradients", "predict_proba", "save_checkpoint", "softmax",
    "stratified_kfold", "train",
]
