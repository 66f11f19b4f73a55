"""Accuracy under concurrent background load, relative to a clean baseline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core.taxonomy import LabelTaxonomy, Stage
from ..core.types import Background, NoiseScenario
from ..learner.model import CnnSpec, as_batch
from ..learner.training import EvalReport, TrainConfig, evaluate_folds, stage_data, stratified_kfold
from ..simulator import PowerModelParams, ThermalModelParams, build_synthetic_dataset

DEFAULT_SCENARIOS = tuple(NoiseScenario.repeat(kind, n) for kind in Background for n in (1, 2, 3))


@dataclass
class RobustnessReport:
    stage: str
    clean: EvalReport
    scenarios: dict = field(default_factory=dict)  # str(scenario) -> EvalReport
    train_noisy: bool = False

    @property
    def drops(self) -> dict:
        """Clean mean accuracy minus scenario mean accuracy, per scenario."""
        base = self.clean.mean_accuracy
        return {name: base - r.mean_accuracy for name, r in self.scenarios.items()}

    def rows(self) -> list[tuple[str, float, float, float]]:
        """(scenario, max, mean, drop) with the clean baseline first."""
        out = [("clean", self.clean.max_accuracy, self.clean.mean_accuracy, 0.0)]
        drops = self.drops
        for name, r in self.scenarios.items():
            out.append((name, r.max_accuracy, r.mean_accuracy, drops[name]))
        return out


def evaluate_robustness(taxonomy: LabelTaxonomy, scenarios: Sequence[NoiseScenario] = DEFAULT_SCENARIOS,
                        power_params: Optional[PowerModelParams] = None,
                        thermal_params: Optional[ThermalModelParams] = None,
                        config: TrainConfig = TrainConfig(), per_class: int = 100,
                        stage: Optional[Stage] = None, spec: Optional[CnnSpec] = None,
                        base_seed: int = 0, train_noisy: bool = False,
                        workers: int = 1) -> RobustnessReport:
    """Cross-validated accuracy per noise scenario.

    By default every fold model is trained on clean traces and tested on the
    same fold's traces regenerated under each scenario (same seeds, so index
    i is the same workload with added background load). ``train_noisy``
    instead trains and tests inside each scenario.
    """
    stage = stage if stage is not None else taxonomy.root
    spec = spec if spec is not None else CnnSpec(n_classes=stage.n_classes)
    leaves = set(stage.leaves)

    def inputs(scenario):
        d = build_synthetic_dataset(taxonomy, per_class, scenario, power_params, thermal_params,
                                    base_seed=base_seed, leaves=leaves)
        feats, y = stage_data(d, stage)
        return as_batch(feats, spec), y

    x, y = inputs(None)
    folds = stratified_kfold(y, config.k_folds, config.seed)
    noisy = []
    for sc in scenarios:
        xs, ys = inputs(sc)
        if not np.array_equal(ys, y):
            raise RuntimeError("noisy dataset is not index-aligned with the clean one")
        noisy.append(xs)
    names = [str(sc) for sc in scenarios]
    if train_noisy:
        clean = evaluate_folds(x, y, folds, spec, config, stage.name, stage.classes, workers=workers)
        reports = [evaluate_folds(xs, y, folds, spec, config, stage.name, stage.classes, workers=workers)
                   for xs in noisy]
    else:
        clean, *reports = evaluate_folds(x, y, folds, spec, config, stage.name, stage.classes,
                                         test_sets=[x] + noisy, workers=workers)
    return RobustnessReport(stage.name, clean, dict(zip(names, reports)), train_noisy)
