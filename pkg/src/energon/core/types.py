"""Domain types shared by every module: traces, model configurations, labels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

DEFAULT_SAMPLE_RATE_HZ = 7.0
DEFAULT_DURATION_S = 120.0
DEFAULT_BASE_TEMP_C = 28.0

TEMP_MIN_C = -50.0
TEMP_MAX_C = 150.0
MAX_BACKGROUND = 8


class Family(str, Enum):
    T5 = "T5"
    MarianMT = "MarianMT"
    META = "META"
    GoogleLang = "GoogleLang"
    Custom = "Custom"
    GoogleViT = "GoogleViT"
    AppleViT = "AppleViT"
    MetaViT = "MetaViT"
    MicrosoftViT = "MicrosoftViT"


class Modality(str, Enum):
    language = "language"
    vision = "vision"


class Source(str, Enum):
    synthetic = "synthetic"
    live = "live"
    replay = "replay"


class Background(str, Enum):
    matmul = "matmul"
    cnn_classify = "cnn_classify"
    vit_inference = "vit_inference"


_BACKGROUND_ALIASES = {
    "matmul": Background.matmul,
    "cnn": Background.cnn_classify,
    "cnn_classify": Background.cnn_classify,
    "vit": Background.vit_inference,
    "vit_inference": Background.vit_inference,
}


def expected_length(sample_rate_hz: float, duration_s: float) -> int:
    """Sample count for a capture, rounding half up."""
    return int(math.floor(sample_rate_hz * duration_s + 0.5))


@dataclass(frozen=True)
class ModelConfig:
    family: Family
    modality: Modality
    encoders: int
    decoders: int
    attention_heads: int
    embedding_dim: int
    name: str

    def __post_init__(self):
        if self.encoders < 1 or self.attention_heads < 1 or self.embedding_dim < 1:
            raise ValueError(f"{self.name}: encoders, heads and dim must be positive")
        if self.decoders < 0:
            raise ValueError(f"{self.name}: decoders must be non-negative")
        if self.modality is Modality.vision and self.decoders != 0:
            raise ValueError(f"{self.name}: vision configs have no decoder")

    @property
    def is_vision(self) -> bool:
        return self.modality is Modality.vision

    def label(self) -> "Label":
        return Label(self.family, self.name, self.attention_heads, self.encoders)


@dataclass(frozen=True)
class Label:
    family: Family
    model_name: str
    heads: int
    layers: int

    def encode(self) -> str:
        return f"{self.family.value}|{self.model_name}|{self.heads}|{self.layers}"

    @classmethod
    def decode(cls, text: str) -> "Label":
        parts = text.split("|")
        if len(parts) != 4:
            raise ValueError(f"malformed label {text!r}")
        family, name, heads, layers = parts
        return cls(Family(family), name, int(heads), int(layers))


@dataclass(frozen=True)
class NoiseScenario:
    """Background processes sharing the GPU with the victim workload."""

    background: tuple[Background, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "background", tuple(Background(b) for b in self.background))
        if len(self.background) > MAX_BACKGROUND:
            raise ValueError(f"at most {MAX_BACKGROUND} background processes")

    @property
    def count(self) -> int:
        return len(self.background)

    @property
    def is_clean(self) -> bool:
        return not self.background

    @classmethod
    def parse(cls, text: str | None) -> "NoiseScenario":
        if text is None:
            return cls()
        text = text.strip()
        if text in ("", "clean", "none"):
            return cls()
        kinds = []
        for part in text.replace("+", ",").split(","):
            part = part.strip()
            if not part:
                continue
            if part not in _BACKGROUND_ALIASES:
                raise ValueError(f"unknown background kind {part!r}")
            kinds.append(_BACKGROUND_ALIASES[part])
        return cls(tuple(kinds))

    @classmethod
    def repeat(cls, kind: Background | str, count: int) -> "NoiseScenario":
        return cls((Background(kind),) * count)

    def __str__(self):
        return "clean" if self.is_clean else ",".join(b.value for b in self.background)


@dataclass(frozen=True)
class TraceMeta:
    source: Source = Source.synthetic
    gpu_name: str = "synthetic-v1"
    base_temp_c: float = DEFAULT_BASE_TEMP_C
    label: Optional[Label] = None
    scenario: Optional[NoiseScenario] = None
    seed: Optional[int] = None
    # filled by live sampling: worst lateness of a tick against its nominal time
    max_tick_jitter_s: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "source", Source(self.source))
        if self.source is Source.synthetic and self.seed is None:
            raise ValueError("synthetic traces must record their seed")
        if self.seed is not None and self.seed < 0:
            raise ValueError("seed must be unsigned")


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("trace channels must be one-dimensional")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Trace:
    """Fixed-rate two-channel capture. Absent channels hold zeros and a cleared flag."""

    power_w: np.ndarray
    temp_c: np.ndarray
    meta: TraceMeta = field(default_factory=lambda: TraceMeta(seed=0))
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    duration_s: float = DEFAULT_DURATION_S
    has_power: bool = True
    has_temp: bool = True

    def __post_init__(self):
        object.__setattr__(self, "power_w", _frozen_array(self.power_w))
        object.__setattr__(self, "temp_c", _frozen_array(self.temp_c))

    @property
    def n_samples(self) -> int:
        return len(self.power_w)

    @property
    def label(self) -> Optional[Label]:
        return self.meta.label

    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate_hz

    def equals(self, other: "Trace") -> bool:
        return (
            self.meta == other.meta
            and self.sample_rate_hz == other.sample_rate_hz
            and self.duration_s == other.duration_s
            and self.has_power == other.has_power
            and self.has_temp == other.has_temp
            and np.array_equal(self.power_w, other.power_w)
            and np.array_equal(self.temp_c, other.temp_c)
        )


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str

    def __str__(self):
        return f"{self.code}: {self.detail}"


def validate_trace(t: Trace) -> list[Violation]:
    """Return every broken Trace invariant; an empty list means the trace is valid."""
    out = []
    n_p, n_t = len(t.power_w), len(t.temp_c)
    if n_p != n_t:
        out.append(Violation("length-mismatch", f"power has {n_p} samples, temperature {n_t}"))
    if min(n_p, n_t) < 1:
        out.append(Violation("empty", "trace has no samples"))
    if not (t.sample_rate_hz > 0) or not (t.duration_s > 0):
        out.append(Violation("bad-timing", f"rate={t.sample_rate_hz} duration={t.duration_s}"))
    else:
        want = expected_length(t.sample_rate_hz, t.duration_s)
        if n_p != want:
            out.append(Violation("length-timing", f"expected {want} samples, got {n_p}"))
    if not (t.has_power or t.has_temp):
        out.append(Violation("no-channels", "both channels marked absent"))
    if t.has_power and n_p:
        if not np.all(np.isfinite(t.power_w)):
            out.append(Violation("non-finite-power", "power contains NaN/inf"))
        elif np.any(t.power_w < 0):
            i = int(np.argmax(t.power_w < 0))
            out.append(Violation("negative-power", f"sample {i} is {t.power_w[i]}"))
    if t.has_temp and n_t:
        if not np.all(np.isfinite(t.temp_c)):
            out.append(Violation("non-finite-temp", "temperature contains NaN/inf"))
        else:
            bad = (t.temp_c < TEMP_MIN_C) | (t.temp_c > TEMP_MAX_C)
            if np.any(bad):
                i = int(np.argmax(bad))
                out.append(Violation("temp-bounds", f"sample {i} is {t.temp_c[i]} C"))
    return out
