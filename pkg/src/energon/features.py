"""Fixed-shape, per-trace normalized classifier inputs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core.types import Label, Trace, validate_trace

DEFAULT_LENGTH = 840
SD_FLOOR = 1e-8
CHANNELS = ("power", "temperature")


class FeatureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    values: np.ndarray  # (2, length): power row, then temperature row
    label: Optional[Label] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != len(CHANNELS) or v.shape[1] < 1:
            raise FeatureError(f"feature values must have shape (2, n), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise FeatureError("feature values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def length(self) -> int:
        return self.values.shape[1]


def resample(x: np.ndarray, target_len: int) -> np.ndarray:
    """Linear interpolation onto ``target_len`` points; output j sits at input position j*n/target_len."""
    n = len(x)
    if n == target_len:
        return np.array(x, dtype=np.float64)
    pos = np.minimum(np.arange(target_len) * (n / target_len), n - 1)
    return np.interp(pos, np.arange(n), x)


def znorm(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    if sd < SD_FLOOR:
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def preprocess(t: Trace, target_len: int = DEFAULT_LENGTH) -> FeatureTensor:
    if target_len < 1:
        raise FeatureError("target_len must be positive")
    missing = [c for c, ok in zip(CHANNELS, (t.has_power, t.has_temp)) if not ok]
    if missing:
        raise FeatureError(f"trace lacks the {' and '.join(missing)} channel")
    problems = validate_trace(t)
    if problems:
        raise FeatureError("; ".join(map(str, problems)))
    rows = [znorm(resample(ch, target_len)) for ch in (t.power_w, t.temp_c)]
    return FeatureTensor(np.stack(rows), t.label)


def batch_features(d, target_len: int = DEFAULT_LENGTH) -> list[FeatureTensor]:
    out = []
    for i, t in enumerate(d):
        try:
            out.append(preprocess(t, target_len))
        except FeatureError as exc:
            raise FeatureError(f"trace {i}: {exc}") from exc
    return out


def stack(features) -> np.ndarray:
    return np.stack([f.values for f in features]) if len(features) else np.zeros((0, 2, 0))
