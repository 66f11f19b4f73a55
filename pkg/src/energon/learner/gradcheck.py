"""Central finite-difference verification of backpropagated gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CnnModel, CnnSpec, activation_pattern, loss_and_gradients

REL_TOL = 1e-4
ABS_FLOOR = 1e-7
# step sizes tried in turn when a perturbation crosses a ReLU or pooling kink
FALLBACK_STEPS = (1e-5, 1e-6, 1e-7)


@dataclass(frozen=True)
class GradientMismatch:
    name: str
    index: tuple[int, ...]
    analytic: float
    numeric: float

    @property
    def abs_error(self) -> float:
        return abs(self.analytic - self.numeric)

    @property
    def rel_error(self) -> float:
        scale = max(abs(self.analytic), abs(self.numeric))
        return self.abs_error / scale if scale > 0 else 0.0


@dataclass
class GradientReport:
    checked: int
    mismatches: list
    kinks: list  # entries whose every step size crossed a kink: no valid difference exists
    worst_rel_error: float = 0.0  # over checked entries above the absolute floor

    @property
    def ok(self) -> bool:
        return not self.mismatches


def _same(a, b) -> bool:
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def check_gradients(model: CnnModel, x: np.ndarray, labels, h: float = 1e-4,
                    rel_tol: float = REL_TOL, abs_floor: float = ABS_FLOOR) -> GradientReport:
    """Compare every parameter gradient with (L(p + h) - L(p - h)) / 2h.

    A central difference is only an oracle where the loss is smooth on
    [p - h, p + h]. When the activation pattern changes inside that interval
    the entry is retried with smaller steps; entries that still straddle a
    kink are reported separately rather than compared. Batch-norm running
    statistics are not touched by the loss, so the check is side-effect free.
    """
    _, grads = loss_and_gradients(model, x, labels)
    base = activation_pattern(model, x)
    report = GradientReport(0, [], [])
    for name, value in model.params.items():
        for idx in np.ndindex(value.shape):
            orig = value[idx]
            numeric = None
            for step in (h,) + tuple(s for s in FALLBACK_STEPS if s < h):
                value[idx] = orig + step
                up, _ = loss_and_gradients(model, x, labels)
                smooth = _same(activation_pattern(model, x), base)
                value[idx] = orig - step
                down, _ = loss_and_gradients(model, x, labels)
                smooth = smooth and _same(activation_pattern(model, x), base)
                value[idx] = orig
                if smooth:
                    numeric = (up - down) / (2 * step)
                    break
            m = GradientMismatch(name, idx, float(grads[name][idx]),
                                 numeric if numeric is not None else float("nan"))
            if numeric is None:
                report.kinks.append(m)
                continue
            report.checked += 1
            if m.abs_error > abs_floor:
                report.worst_rel_error = max(report.worst_rel_error, m.rel_error)
                if m.rel_error > rel_tol:
                    report.mismatches.append(m)
    return report


def random_tiny_spec(rng: np.random.Generator, max_length: int = 16) -> CnnSpec:
    """A small but complete network: 1-3 conv blocks, optional pooling, two dense layers."""
    while True:
        n_conv = int(rng.integers(1, 4))
        spec_kw = dict(
            n_classes=int(rng.integers(2, 5)),
            conv_filters=tuple(int(f) for f in rng.integers(1, 4, n_conv)),
            kernel_size=int(rng.integers(1, 4)),
            pool_after=tuple(bool(b) for b in rng.integers(0, 2, n_conv)),
            fc_hidden=int(rng.integers(2, 6)),
            input_channels=int(rng.integers(1, 3)),
            input_length=int(rng.integers(4, max_length + 1)),
        )
        try:
            return CnnSpec(**spec_kw)
        except ValueError:
            continue


def perturbed_model(spec: CnnSpec, rng: np.random.Generator, training: bool = True) -> CnnModel:
    """Initialized model with batch-norm and biases moved off their identity values."""
    model = CnnModel.initialize(spec, int(rng.integers(2**31)))
    for name, v in model.params.items():
        v += rng.normal(0.0, 0.3, v.shape)
    for name, v in model.buffers.items():
        v[...] = rng.uniform(0.5, 1.5, v.shape) if name.endswith("var") else rng.normal(0, 0.3, v.shape)
    model.training = training
    return model
