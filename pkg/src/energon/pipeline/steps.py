"""Staircase analysis of a single power trace."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PLATEAU_SAMPLES = 2


@dataclass(frozen=True)
class StepAnalysis:
    count: int
    boundaries: tuple[int, ...]  # raw sample index where each new level starts
    mean_rise_w: float
    smooth_window: int
    segment: tuple[int, int]  # raw sample range of the analysed ramp

    def __str__(self):
        return (f"steps={self.count} mean_rise={self.mean_rise_w:.3f}W window={self.smooth_window} "
                f"segment={self.segment[0]}..{self.segment[1]} boundaries={list(self.boundaries)}")


def _ramp_segments(d: np.ndarray, min_rise_w: float):
    """Maximal runs of forward differences free of significant drops."""
    drop = d <= -min_rise_w
    segs, start = [], 0
    for i, is_drop in enumerate(drop):
        if is_drop:
            if i > start:
                segs.append((start, i))
            start = i + 1
    if start < len(d):
        segs.append((start, len(d)))
    return segs


def count_steps(power, smooth_window: int = 3, min_rise_w: float = 0.5) -> StepAnalysis:
    """Count plateaus of the largest monotone staircase in ``power``.

    The signal is smoothed with a trailing moving average; a step boundary is
    a smoothed rise of at least ``min_rise_w`` preceded by two flat
    differences. Smoothing spreads a level change of R watts over
    ``smooth_window`` differences of R / smooth_window each, so that ratio is
    what must reach ``min_rise_w``. Drops of at least ``min_rise_w`` split the
    trace into ramps.
    A ramp with b boundaries has b + 1 plateaus; a ramp without any rise
    counts as zero steps.
    """
    x = np.asarray(power, dtype=np.float64)
    if not 1 <= smooth_window < len(x):
        raise ValueError("need 1 <= smooth_window < len(power)")
    s = np.convolve(x, np.ones(smooth_window) / smooth_window, mode="valid")
    d = np.diff(s)
    flat = np.abs(d) < min_rise_w

    best = (0, (), 0.0, (0, len(x)))
    for a, b in _ramp_segments(d, min_rise_w):
        bounds, rises = [], []
        for i in range(a + PLATEAU_SAMPLES, b):
            if d[i] >= min_rise_w and flat[i - PLATEAU_SAMPLES:i].all():
                bounds.append(i + smooth_window)
                rises.append(s[min(i + smooth_window, len(s) - 1)] - s[i])
        count = len(bounds) + 1 if bounds else 0
        if count > best[0]:
            best = (count, tuple(bounds), float(np.mean(rises)), (a, b + smooth_window))
    count, bounds, mean_rise, segment = best
    return StepAnalysis(count, bounds, mean_rise, smooth_window, segment)


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class LayerCalibration:
    """Straight-line fit of mean step rise against layer count."""

    slope: float
    intercept: float
    layers: tuple[int, ...]  # registered layer counts an estimate may snap to
    centroids: tuple[float, ...]  # mean observed rise per registered layer count

    def predicted_rise(self, layers) -> np.ndarray:
        return self.slope * np.asarray(layers, dtype=np.float64) + self.intercept


def fit_layer_calibration(samples) -> LayerCalibration:
    """``samples``: (layer count, StepAnalysis or mean rise in watts) pairs."""
    by_layer: dict[int, list[float]] = {}
    for layers, obs in samples:
        rise = obs.mean_rise_w if isinstance(obs, StepAnalysis) else float(obs)
        by_layer.setdefault(int(layers), []).append(rise)
    if not by_layer:
        raise CalibrationError("empty calibration")
    layers = tuple(sorted(by_layer))
    centroids = tuple(float(np.mean(by_layer[l])) for l in layers)
    if len(layers) == 1:
        return LayerCalibration(0.0, centroids[0], layers, centroids)
    slope, intercept = np.polyfit(np.array(layers, dtype=np.float64), np.array(centroids), 1)
    return LayerCalibration(float(slope), float(intercept), layers, centroids)


def estimate_layers_from_steps(analysis: StepAnalysis | float, calibration: LayerCalibration) -> int:
    """Registered layer count whose fitted rise is closest to the observed mean rise."""
    if calibration is None or not calibration.layers:
        raise CalibrationError("empty calibration")
    rise = analysis.mean_rise_w if isinstance(analysis, StepAnalysis) else float(analysis)
    gaps = np.abs(calibration.predicted_rise(calibration.layers) - rise)
    return calibration.layers[int(np.argmin(gaps))]
