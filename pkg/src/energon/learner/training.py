"""Mini-batch training, stratified folds and cross-validated evaluation."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .model import (
    CnnModel,
    CnnSpec,
    as_batch,
    loss_and_gradients_with_stats,
    update_running_stats,
)
from .optim import AdamConfig, AdamState, adam_step

EVAL_CHUNK = 256


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    k_folds: int = 5

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        if self.k_folds < 2:
            raise ValueError("k_folds must be at least 2")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")

    @property
    def adam(self) -> AdamConfig:
        return AdamConfig(self.lr, self.beta1, self.beta2, self.eps)


def _batches(order: np.ndarray, size: int) -> list[np.ndarray]:
    chunks = [order[i:i + size] for i in range(0, len(order), size)]
    # batch-norm needs two samples for a batch variance
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate(chunks[-2:])
        chunks.pop()
    return chunks


def init_seed(seed: int) -> int:
    """Weight-initialization seed derived from a training seed."""
    return int(np.random.SeedSequence(seed).spawn(2)[0].generate_state(1)[0])


def train(features, labels, spec: CnnSpec, config: TrainConfig) -> tuple[CnnModel, list[float]]:
    """Train from a seeded initialization; returns the eval-mode model and per-epoch mean loss."""
    x = as_batch(features, spec)
    y = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise TrainingError("no training data")
    if y.shape != (len(x),):
        raise TrainingError(f"{len(x)} inputs but {len(y)} labels")
    model = CnnModel.initialize(spec, init_seed(config.seed)).train()
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[1])
    state, step, curve = AdamState(), 0, []
    for epoch in range(config.epochs):
        total = 0.0
        for idx in _batches(rng.permutation(len(x)), config.batch_size):
            loss, grads, stats = loss_and_gradients_with_stats(model, x[idx], y[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch + 1}")
            step += 1
            adam_step(model.params, grads, state, config.adam, step)
            update_running_stats(model, stats)
            total += loss * len(idx)
        curve.append(total / len(x))
    return model.eval(), curve


def predict_proba(model: CnnModel, features) -> np.ndarray:
    x = as_batch(features, model.spec)
    was_training = model.training
    model.eval()
    try:
        parts = [model.forward(x[i:i + EVAL_CHUNK]) for i in range(0, len(x), EVAL_CHUNK)]
    finally:
        model.training = was_training
    return np.concatenate(parts) if parts else np.zeros((0, model.spec.n_classes))


def stratified_kfold(labels, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """k (train, validation) index pairs; each class is spread round-robin over folds after a seeded shuffle.

    ``labels`` is a sequence of class keys or a TraceDataset (keyed by model name).
    """
    keys = labels.model_names if hasattr(labels, "model_names") else list(labels)
    if k < 2:
        raise ValueError("k must be at least 2")
    by_class: dict = {}
    for i, key in enumerate(keys):
        by_class.setdefault(key, []).append(i)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(keys), dtype=np.int64)
    offset = 0
    for key in sorted(by_class, key=str):
        idx = np.asarray(by_class[key])
        if len(idx) < k:
            raise ValueError(f"class {key!r} has {len(idx)} members; need at least k={k}")
        fold_of[idx[rng.permutation(len(idx))]] = (offset + np.arange(len(idx))) % k
        offset += len(idx)
    all_idx = np.arange(len(keys))
    return [(all_idx[fold_of != f], all_idx[fold_of == f]) for f in range(k)]


@dataclass
class EvalReport:
    stage: str
    class_names: tuple[str, ...]
    fold_accuracies: list[float]
    confusion: np.ndarray  # rows true class, columns predicted
    loss_curves: list[list[float]] = field(default_factory=list)

    @property
    def max_accuracy(self) -> float:
        return max(self.fold_accuracies)

    @property
    def mean_accuracy(self) -> float:
        return sum(self.fold_accuracies) / len(self.fold_accuracies)

    @property
    def precision(self) -> np.ndarray:
        col = self.confusion.sum(axis=0)
        return np.divide(np.diag(self.confusion), col, out=np.zeros(len(col)), where=col > 0)

    @property
    def recall(self) -> np.ndarray:
        row = self.confusion.sum(axis=1)
        return np.divide(np.diag(self.confusion), row, out=np.zeros(len(row)), where=row > 0)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "class_names": list(self.class_names),
            "fold_accuracies": self.fold_accuracies,
            "max_accuracy": self.max_accuracy,
            "mean_accuracy": self.mean_accuracy,
            "confusion": self.confusion.tolist(),
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
        }


def stage_data(dataset, stage):
    """Features and class indices of the traces a stage covers."""
    from ..features import batch_features

    keep = [i for i, name in enumerate(dataset.model_names) if stage.covers(name)]
    feats = batch_features([dataset[i] for i in keep])
    labels = np.array([stage.class_index(dataset.model_names[i]) for i in keep], dtype=np.int64)
    return feats, labels


def _fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def evaluate_folds(x, y, folds, spec: CnnSpec, config: TrainConfig, stage_name: str,
                   class_names, test_sets=None, workers: int = 1) -> EvalReport:
    """Train on each fold's training indices; test on its validation indices.

    ``test_sets`` optionally replaces the validation inputs with index-aligned
    alternatives (same labels), one report per alternative.
    """
    n = len(class_names)
    alternatives = test_sets if test_sets is not None else [x]

    def run(f):
        tr, va = folds[f]
        cfg = replace(config, seed=_fold_seed(config.seed, f))
        model, curve = train(x[tr], y[tr], spec, cfg)
        preds = [np.argmax(predict_proba(model, alt[va]), axis=1) for alt in alternatives]
        return curve, preds, va

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, range(len(folds))))
    else:
        results = [run(f) for f in range(len(folds))]

    reports = []
    for a in range(len(alternatives)):
        conf = np.zeros((n, n), dtype=np.int64)
        accs = []
        for curve, preds, va in results:
            np.add.at(conf, (y[va], preds[a]), 1)
            accs.append(float(np.mean(preds[a] == y[va])))
        reports.append(EvalReport(stage_name, tuple(class_names), accs, conf,
                                  [r[0] for r in results]))
    return reports if test_sets is not None else reports[0]


def cross_validate(dataset, stage, spec: CnnSpec | None, config: TrainConfig,
                   workers: int = 1) -> EvalReport:
    """Stratified k-fold evaluation of one taxonomy stage on a labeled dataset."""
    feats, y = stage_data(dataset, stage)
    if spec is None:
        spec = CnnSpec(n_classes=stage.n_classes)
    if spec.n_classes != stage.n_classes:
        raise ValueError(f"spec has {spec.n_classes} classes, stage {stage.name!r} has {stage.n_classes}")
    x = as_batch(feats, spec)
    folds = stratified_kfold(y, config.k_folds, config.seed)
    return evaluate_folds(x, y, folds, spec, config, stage.name, stage.classes, workers=workers)
