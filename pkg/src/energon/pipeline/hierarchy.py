"""Two-stage prediction: a root classifier picks the coarse class, a branch classifier the leaf."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..core.taxonomy import LabelTaxonomy, Stage, get_taxonomy
from ..core.types import Label, Trace
from ..features import DEFAULT_LENGTH, preprocess
from ..learner.checkpoint import load_checkpoint, save_checkpoint
from ..learner.model import CnnModel, CnnSpec
from ..learner.training import TrainConfig, predict_proba, stage_data, train

PREDICTOR_FILE = "predictor.json"


class UntrainedStageError(RuntimeError):
    pass


@dataclass(frozen=True)
class StageResult:
    stage: str
    predicted: str
    confidence: float


@dataclass
class HierarchicalPredictor:
    taxonomy: LabelTaxonomy
    root: Optional[CnnModel]
    branches: dict  # root class -> CnnModel for classes with more than one leaf
    feature_length: int = DEFAULT_LENGTH

    def missing_stages(self) -> list[str]:
        out = [] if self.root is not None else [self.taxonomy.root.name]
        for cls in self.taxonomy.root.classes:
            sub = self.taxonomy.substage(cls)
            if sub is not None and cls not in self.branches:
                out.append(sub.name)
        return out


def _spec_for(stage: Stage, template: Optional[CnnSpec], length: int) -> CnnSpec:
    if template is None:
        return CnnSpec(n_classes=stage.n_classes, input_length=length)
    return replace(template, n_classes=stage.n_classes)


def train_stage(dataset, stage: Stage, config: TrainConfig, spec: Optional[CnnSpec] = None,
                length: int = DEFAULT_LENGTH) -> CnnModel:
    feats, y = stage_data(dataset, stage)
    if len(y) == 0:
        raise UntrainedStageError(f"dataset holds no traces for stage {stage.name!r}")
    model, _ = train(feats, y, _spec_for(stage, spec, length), config)
    return model


def train_hierarchical(dataset, taxonomy: LabelTaxonomy, config: TrainConfig,
                       spec: Optional[CnnSpec] = None) -> HierarchicalPredictor:
    length = spec.input_length if spec is not None else DEFAULT_LENGTH
    root = train_stage(dataset, taxonomy.root, config, spec, length)
    branches = {}
    for cls in taxonomy.root.classes:
        sub = taxonomy.substage(cls)
        if sub is not None:
            branches[cls] = train_stage(dataset, sub, config, spec, length)
    return HierarchicalPredictor(taxonomy, root, branches, length)


def predict_hierarchical(p: HierarchicalPredictor, t: Trace) -> tuple[Label, list[StageResult]]:
    """Leaf label plus the softmax maximum of each stage on the path to it."""
    if p.root is None:
        raise UntrainedStageError(f"stage {p.taxonomy.root.name!r} has no model")
    x = preprocess(t, p.feature_length).values[None]
    root = p.taxonomy.root
    probs = predict_proba(p.root, x)[0]
    k = int(np.argmax(probs))
    cls = root.classes[k]
    results = [StageResult(root.name, cls, float(probs[k]))]
    sub = p.taxonomy.substage(cls)
    if sub is None:
        # single-leaf class: the coarse decision already names the model
        leaf = root.members[k][0]
        results.append(StageResult(f"{cls}:leaf", leaf, 1.0))
    else:
        model = p.branches.get(cls)
        if model is None:
            raise UntrainedStageError(f"stage {sub.name!r} has no model")
        sp = predict_proba(model, x)[0]
        j = int(np.argmax(sp))
        leaf = sub.members[j][0]
        results.append(StageResult(sub.name, sub.classes[j], float(sp[j])))
    return p.taxonomy.leaf(leaf), results


def evaluate_hierarchical(p: HierarchicalPredictor, dataset) -> float:
    """Fraction of traces whose predicted leaf is the true model."""
    hits = [predict_hierarchical(p, t)[0].model_name == t.label.model_name for t in dataset]
    return float(np.mean(hits)) if hits else 0.0


def _stage_file(name: str) -> str:
    return "stage_" + "".join(c if c.isalnum() else "_" for c in name) + ".ckpt"


def save_predictor(p: HierarchicalPredictor, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"taxonomy": p.taxonomy.name, "feature_length": p.feature_length, "stages": {}}
    models = [(p.taxonomy.root, p.root)] + [(p.taxonomy.substage(c), m) for c, m in p.branches.items()]
    for stage, model in models:
        if model is None:
            continue
        fname = _stage_file(stage.name)
        save_checkpoint(model, out / fname, stage.classes, {"stage": stage.name})
        doc["stages"][stage.name] = fname
    tmp = out / (PREDICTOR_FILE + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, out / PREDICTOR_FILE)
    return out


def load_predictor(in_dir) -> HierarchicalPredictor:
    d = Path(in_dir)
    doc = json.loads((d / PREDICTOR_FILE).read_text())
    tax = get_taxonomy(doc["taxonomy"])
    models = {}
    for stage_name, fname in doc["stages"].items():
        stage = tax.stage(stage_name)
        model, classes, _ = load_checkpoint(d / fname)
        if tuple(classes) != stage.classes:
            raise ValueError(f"{fname}: classes {classes} do not match stage {stage_name!r}")
        models[stage_name] = model
    branches = {s.parent: models[s.name] for s in tax.stages[1:] if s.name in models}
    return HierarchicalPredictor(tax, models.get(tax.root.name), branches, doc["feature_length"])
