"""Two-stage label hierarchies.

Stage 0 partitions every leaf model into coarse classes (model family, or
head count for in-house models). Each coarse class holding more than one leaf
gets a refining stage keyed on heads or layers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .registry import CUSTOM_MODELS, LANGUAGE_MODELS, VISION_MODELS, registry_lookup
from .types import Label, ModelConfig


@dataclass(frozen=True)
class Stage:
    name: str
    parent: Optional[str]  # stage-0 class this stage refines; None for the root
    classes: tuple[str, ...]
    members: tuple[tuple[str, ...], ...]  # leaf model names per class, aligned with classes

    def class_index(self, model_name: str) -> int:
        for i, names in enumerate(self.members):
            if model_name in names:
                return i
        raise KeyError(f"{model_name!r} is not covered by stage {self.name!r}")

    def covers(self, model_name: str) -> bool:
        return any(model_name in names for names in self.members)

    @property
    def leaves(self) -> tuple[str, ...]:
        return tuple(n for names in self.members for n in names)

    @property
    def n_classes(self) -> int:
        return len(self.classes)


def _family_key(cfg: ModelConfig) -> str:
    return cfg.family.value


def _heads_key(cfg: ModelConfig) -> str:
    return f"heads={cfg.attention_heads}"


def _layers_key(cfg: ModelConfig) -> str:
    return f"layers={cfg.encoders}"


def _group(configs, key):
    classes: dict[str, list[str]] = {}
    for cfg in configs:
        classes.setdefault(key(cfg), []).append(cfg.name)
    return tuple(classes), tuple(tuple(v) for v in classes.values())


@dataclass(frozen=True)
class LabelTaxonomy:
    name: str
    leaves: tuple[Label, ...]
    stages: tuple[Stage, ...]

    @property
    def root(self) -> Stage:
        return self.stages[0]

    def stage(self, name: str) -> Stage:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(f"taxonomy {self.name!r} has no stage {name!r}; "
                       f"stages: {', '.join(s.name for s in self.stages)}")

    def substage(self, root_class: str) -> Optional[Stage]:
        for s in self.stages[1:]:
            if s.parent == root_class:
                return s
        return None

    def leaf(self, model_name: str) -> Label:
        for lab in self.leaves:
            if lab.model_name == model_name:
                return lab
        raise KeyError(f"{model_name!r} is not a leaf of taxonomy {self.name!r}")

    def contains(self, label: Label) -> bool:
        return any(l.family == label.family and l.model_name == label.model_name for l in self.leaves)

    def path(self, model_name: str) -> list[tuple[str, str]]:
        """(stage name, class) pairs classifying ``model_name`` from the root down."""
        root_cls = self.root.classes[self.root.class_index(model_name)]
        out = [(self.root.name, root_cls)]
        sub = self.substage(root_cls)
        if sub is not None:
            out.append((sub.name, sub.classes[sub.class_index(model_name)]))
        return out


def build_taxonomy(name: str, configs, root_key: Callable, sub_keys: dict | Callable) -> LabelTaxonomy:
    """``sub_keys`` is one key function for every branch, or a per-class mapping."""
    configs = tuple(configs)
    classes, members = _group(configs, root_key)
    stages = [Stage(root_key.__name__.strip("_").replace("_key", ""), None, classes, members)]
    for cls, names in zip(classes, members):
        if len(names) < 2:
            continue
        key = sub_keys[cls] if isinstance(sub_keys, dict) else sub_keys
        sub_classes, sub_members = _group([c for c in configs if c.name in names], key)
        if len(sub_classes) != len(names):
            raise ValueError(f"{cls}: sub-stage key does not separate {names}")
        stages.append(Stage(f"{cls}:{key.__name__.strip('_').replace('_key', '')}", cls,
                            sub_classes, sub_members))
    return LabelTaxonomy(name, tuple(c.label() for c in configs), tuple(stages))


def language_taxonomy() -> LabelTaxonomy:
    # T5 variants differ in heads; the two NLLB models share heads and differ in depth
    return build_taxonomy("language", LANGUAGE_MODELS, _family_key,
                          {"T5": _heads_key, "META": _layers_key})


def vision_taxonomy() -> LabelTaxonomy:
    return build_taxonomy("vision", VISION_MODELS, _family_key,
                          {"GoogleViT": _heads_key, "MetaViT": _heads_key, "MicrosoftViT": _heads_key})


def custom_taxonomy() -> LabelTaxonomy:
    return build_taxonomy("custom", CUSTOM_MODELS, _heads_key, _layers_key)


TAXONOMIES = {
    "language": language_taxonomy,
    "vision": vision_taxonomy,
    "custom": custom_taxonomy,
}


def get_taxonomy(name: str) -> LabelTaxonomy:
    try:
        return TAXONOMIES[name]()
    except KeyError:
        raise KeyError(f"unknown taxonomy {name!r}; choose from {', '.join(TAXONOMIES)}") from None


def config_for(label: Label) -> ModelConfig:
    return registry_lookup(label.model_name)
