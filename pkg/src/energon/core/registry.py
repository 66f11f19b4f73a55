"""Built-in catalogue of transformer configurations used as extraction targets."""

from __future__ import annotations

from .types import Family, Modality, ModelConfig


def _lang(family, name, layers, heads, dim):
    return ModelConfig(family, Modality.language, layers, layers, heads, dim, name)


def _vit(family, name, layers, heads, dim):
    return ModelConfig(family, Modality.vision, layers, 0, heads, dim, name)


LANGUAGE_MODELS = (
    _lang(Family.T5, "t5-small", 6, 8, 512),
    _lang(Family.T5, "t5-base", 12, 12, 768),
    _lang(Family.T5, "t5-large", 24, 16, 1024),
    _lang(Family.T5, "t5-3b", 24, 32, 1024),
    _lang(Family.MarianMT, "Helsinki-NLP/opus-mt-en-fr", 6, 8, 512),
    _lang(Family.META, "facebook/nllb-200-distilled-600M", 12, 16, 1024),
    _lang(Family.META, "facebook/nllb-200-distilled-1.3B", 24, 16, 1024),
    _lang(Family.GoogleLang, "google/madlad400-3b-mt", 32, 16, 1024),
)

VISION_MODELS = (
    _vit(Family.GoogleViT, "google/vit-base-patch16-224", 12, 12, 768),
    _vit(Family.GoogleViT, "google/vit-large-patch16-225", 24, 16, 1024),
    _vit(Family.AppleViT, "apple/mobilevit-small", 12, 4, 384),
    _vit(Family.MetaViT, "facebook/deit-tiny-distilled-patch16-224", 12, 3, 192),
    _vit(Family.MetaViT, "facebook/deit-small-distilled-patch16-224", 12, 6, 384),
    _vit(Family.MetaViT, "facebook/deit-base-distilled-patch16-224", 12, 12, 768),
    _vit(Family.MicrosoftViT, "microsoft/swin-tiny-patch4-window7-224", 12, 3, 96),
    _vit(Family.MicrosoftViT, "microsoft/swin-base-patch4-window7-224", 12, 12, 768),
)

# (layers, heads) of the in-house models; all use a 512-wide embedding
CUSTOM_SHAPES = ((6, 8), (12, 8), (12, 12), (12, 16), (24, 16), (32, 16), (48, 16), (24, 32), (32, 32))


def custom_config(layers: int, heads: int, dim: int = 512) -> ModelConfig:
    return _lang(Family.Custom, f"custom-{layers}/{heads}", layers, heads, dim)


CUSTOM_MODELS = tuple(custom_config(l, h) for l, h in CUSTOM_SHAPES)

REGISTRY: dict[str, ModelConfig] = {
    cfg.name: cfg for cfg in LANGUAGE_MODELS + VISION_MODELS + CUSTOM_MODELS
}

ALIASES = {
    "opus-mt-en-fr": "Helsinki-NLP/opus-mt-en-fr",
    "nllb-200-distilled-600M": "facebook/nllb-200-distilled-600M",
    "nllb-200-distilled-1.3B": "facebook/nllb-200-distilled-1.3B",
    "madlad400-3b-mt": "google/madlad400-3b-mt",
    "google/vit-base": "google/vit-base-patch16-224",
    "google/vit-large": "google/vit-large-patch16-225",
    "google/vit-large-patch16-224": "google/vit-large-patch16-225",
    "vit-base": "google/vit-base-patch16-224",
    "vit-large": "google/vit-large-patch16-225",
    "mobilevit-small": "apple/mobilevit-small",
    "deit-tiny": "facebook/deit-tiny-distilled-patch16-224",
    "deit-small": "facebook/deit-small-distilled-patch16-224",
    "deit-base": "facebook/deit-base-distilled-patch16-224",
    "swin-tiny": "microsoft/swin-tiny-patch4-window7-224",
    "swin-base": "microsoft/swin-base-patch4-window7-224",
}
for _cfg in VISION_MODELS:
    ALIASES.setdefault(_cfg.name.split("/", 1)[1], _cfg.name)


class UnknownModelError(KeyError):
    def __init__(self, name):
        self.name = name
        super().__init__(name)

    def __str__(self):
        return f"unknown model {self.name!r}; registered: {', '.join(sorted(REGISTRY))}"


def registry_lookup(name: str) -> ModelConfig:
    key = ALIASES.get(name, name)
    try:
        return REGISTRY[key]
    except KeyError:
        raise UnknownModelError(name) from None
