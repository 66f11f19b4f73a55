"""Synthetic GPU power and temperature traces for transformer inference.

Per inference, a language model draws an encoder plateau followed by a
decoder staircase (one step per generated token, rising linearly up to the
decoder peak); a vision model draws one plateau. Heights scale with a
size unit normalised to the 6-layer/8-head/512-dim reference::

    u = (layers / 6) * (heads / 8) * (dim / 512)
    encoder plateau = p_idle + alpha_enc * u
    decoder peak    = min(p_cap, p_idle + alpha_dec * u)

Temperature follows a first-order lumped thermal model integrated with
forward Euler. Background processes add their own power draw and the sum is
clamped to the device cap.

Everything here is a synthetic stand-in for hardware, calibrated to the
published single-inference readings (6 W encoder, 20 W decoder peak for a
1-layer, 8-head, 512-dim model); it is not a physical GPU model.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .core.dataset import TraceDataset
from .core.registry import registry_lookup
from .core.taxonomy import LabelTaxonomy
from .core.types import (
    DEFAULT_BASE_TEMP_C,
    DEFAULT_DURATION_S,
    DEFAULT_SAMPLE_RATE_HZ,
    Background,
    Family,
    ModelConfig,
    NoiseScenario,
    Source,
    Trace,
    TraceMeta,
    expected_length,
)


class SimulationError(ValueError):
    pass


# Single-inference readings for the 1-layer/8-head/512-dim model (u = 1/6).
ANCHOR_IDLE_W = 2.0
ANCHOR_ENCODER_W = 6.0
ANCHOR_DECODER_W = 20.0
_ANCHOR_U = 1.0 / 6.0


@dataclass(frozen=True)
class PowerModelParams:
    p_idle_w: float = ANCHOR_IDLE_W
    alpha_enc: float = (ANCHOR_ENCODER_W - ANCHOR_IDLE_W) / _ANCHOR_U
    alpha_dec: float = (ANCHOR_DECODER_W - ANCHOR_IDLE_W) / _ANCHOR_U
    p_cap_w: float = 300.0
    tokens_per_inference: int = 12
    enc_seconds: float = 0.6
    # per-token decoder time for the reference config; scaled per model below
    dec_step_seconds: float = 0.85
    jitter_sd_w: float = 0.15

    def __post_init__(self):
        if not self.p_idle_w < self.p_cap_w:
            raise ValueError("p_idle_w must be below p_cap_w")
        if self.p_idle_w < 0 or self.alpha_enc < 0 or self.alpha_dec < 0:
            raise ValueError("idle power and gains must be non-negative")
        if self.tokens_per_inference < 1:
            raise ValueError("tokens_per_inference must be positive")
        if self.enc_seconds <= 0 or self.dec_step_seconds <= 0:
            raise ValueError("phase durations must be positive")
        if self.jitter_sd_w < 0:
            raise ValueError("jitter_sd_w must be non-negative")


@dataclass(frozen=True)
class ThermalModelParams:
    tau_s: float = 45.0
    # 30 W sustained settles 22 C above ambient
    kappa: float = 22.0 / (45.0 * 30.0)
    t_ambient_c: float = DEFAULT_BASE_TEMP_C

    def __post_init__(self):
        if self.tau_s <= 0 or self.kappa <= 0:
            raise ValueError("tau_s and kappa must be positive")


@dataclass(frozen=True)
class GpuProfile:
    name: str
    power: PowerModelParams
    thermal: ThermalModelParams = field(default_factory=ThermalModelParams)


# The anchor gains put every registry model above a 300 W cap, which would
# flatten their staircases. The data-center profile trades per-unit gain for
# headroom: idle 30 W, and the largest registry encoder (u = 32) stays below cap.
PROFILES = {
    "gtx1660ti": GpuProfile("gtx1660ti", PowerModelParams(p_cap_w=80.0)),
    "a40": GpuProfile(
        "a40",
        PowerModelParams(p_idle_w=30.0, alpha_enc=2.5, alpha_dec=25.0, p_cap_w=300.0),
        ThermalModelParams(kappa=55.0 / (45.0 * 300.0)),
    ),
}
DEFAULT_PROFILE = "a40"


def get_profile(name: str) -> GpuProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise KeyError(f"unknown GPU profile {name!r}; choose from {', '.join(PROFILES)}") from None


# Implementation signature per family: (token/inference latency multiplier,
# idle gap between inferences in seconds). Language decoders differ mostly in
# output-vocabulary projection cost; vision pipelines in patching and host-side
# image preprocessing, which leaves the GPU idle between inferences.
FAMILY_TIMING = {
    Family.T5: (1.0, 0.0),
    Family.MarianMT: (1.25, 0.0),
    Family.META: (1.1, 0.0),
    Family.GoogleLang: (0.9, 0.0),
    Family.Custom: (1.0, 0.0),
    Family.GoogleViT: (1.0, 0.6),
    Family.AppleViT: (1.3, 0.9),
    Family.MetaViT: (0.9, 0.45),
    Family.MicrosoftViT: (1.15, 0.75),
}


def size_unit(cfg: ModelConfig) -> float:
    return (cfg.encoders / 6) * (cfg.attention_heads / 8) * (cfg.embedding_dim / 512)


def phase_heights(cfg: ModelConfig, params: PowerModelParams) -> tuple[float, float]:
    """Noiseless (encoder plateau, decoder peak) in watts."""
    u = size_unit(cfg)
    enc = min(params.p_cap_w, params.p_idle_w + params.alpha_enc * u)
    dec = min(params.p_cap_w, params.p_idle_w + params.alpha_dec * u)
    return enc, max(enc, dec)


def _width_factor(cfg: ModelConfig) -> float:
    return ((cfg.attention_heads / 8) * (cfg.embedding_dim / 512)) ** 0.25


def inference_segments(cfg: ModelConfig, params: PowerModelParams):
    """One inference as (offsets, heights, active_s, period_s).

    offsets/heights describe a piecewise-constant signal starting at 0; the
    active part is followed by the family's idle gap, after which the next
    inference starts.
    """
    enc_p, dec_p = phase_heights(cfg, params)
    latency, gap = FAMILY_TIMING[cfg.family]
    enc_s = params.enc_seconds * cfg.encoders / 6
    if cfg.is_vision:
        offsets = [0.0]
        heights = [enc_p]
        active = enc_s * _width_factor(cfg) * latency
    else:
        n = params.tokens_per_inference
        step_s = params.dec_step_seconds * (cfg.decoders / 6) * _width_factor(cfg) * latency
        offsets = [0.0] + [enc_s + i * step_s for i in range(n)]
        if n == 1:
            steps = [dec_p]
        else:
            steps = [enc_p + (dec_p - enc_p) * i / (n - 1) for i in range(n)]
        heights = [enc_p] + steps
        active = enc_s + n * step_s
    if gap > 0:
        offsets.append(active)
        heights.append(params.p_idle_w)
    return np.array(offsets), np.array(heights), active, active + gap


def inferences_to_fill(cfg: ModelConfig, params: PowerModelParams, duration_s: float) -> int:
    *_, period = inference_segments(cfg, params)
    return max(1, math.ceil(duration_s / period))


def workload_power(cfg: ModelConfig, params: PowerModelParams, n_inferences: int,
                   sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
                   duration_s: float = DEFAULT_DURATION_S, seed: int = 0) -> np.ndarray:
    """Power drawn by ``n_inferences`` back-to-back inferences, idle afterwards."""
    if n_inferences < 1:
        raise SimulationError("n_inferences must be positive")
    offsets, heights, active, period = inference_segments(cfg, params)
    if active > duration_s:
        raise SimulationError(
            f"{cfg.name}: one inference takes {active:.2f} s, longer than the {duration_s} s capture")
    n_runs = min(n_inferences, math.ceil(duration_s / period))
    starts = (np.arange(n_runs)[:, None] * period + offsets[None, :]).ravel()
    levels = np.tile(heights, n_runs)
    starts = np.append(starts, n_runs * period)
    levels = np.append(levels, params.p_idle_w)

    n = expected_length(sample_rate_hz, duration_s)
    t = np.arange(n) / sample_rate_hz
    signal = levels[np.searchsorted(starts, t, side="right") - 1]
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, params.jitter_sd_w, n)
    return np.clip(signal + noise, 0.0, params.p_cap_w)


def thermal_from_power(power, params: ThermalModelParams, t0: float,
                       sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> np.ndarray:
    """Forward-Euler solution of dT/dt = (T_amb - T)/tau + kappa*P.

    Element i is the temperature after i steps from ``t0``; power[i] drives
    the step from i to i + 1.
    """
    if sample_rate_hz <= 0:
        raise SimulationError("sample_rate_hz must be positive")
    h = 1.0 / sample_rate_hz
    if h >= params.tau_s:
        raise SimulationError(f"step {h} s is not below tau {params.tau_s} s; Euler would be unstable")
    power = np.asarray(power, dtype=np.float64)
    out = np.empty(len(power))
    temp = float(t0)
    amb, tau, kappa = params.t_ambient_c, params.tau_s, params.kappa
    for i, p in enumerate(power.tolist()):
        out[i] = temp
        temp = temp + h * ((amb - temp) / tau + kappa * p)
    return out


MATMUL_FRACTION = 0.6
CNN_FRACTION = 0.4
CNN_PERIOD_S = 4.0
CNN_DUTY = 0.5
VIT_BACKGROUND_MODEL = "deit-base"


def background_power(kind: Background | str, params: PowerModelParams,
                     sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
                     duration_s: float = DEFAULT_DURATION_S, seed: int = 0) -> np.ndarray:
    kind = Background(kind)
    if kind is Background.vit_inference:
        cfg = registry_lookup(VIT_BACKGROUND_MODEL)
        return workload_power(cfg, params, inferences_to_fill(cfg, params, duration_s),
                              sample_rate_hz, duration_s, seed)
    n = expected_length(sample_rate_hz, duration_s)
    if kind is Background.matmul:
        signal = np.full(n, MATMUL_FRACTION * params.p_cap_w)
    else:
        phase = (np.arange(n) / sample_rate_hz) % CNN_PERIOD_S
        signal = np.where(phase < CNN_DUTY * CNN_PERIOD_S, CNN_FRACTION * params.p_cap_w, 0.0)
    rng = np.random.default_rng(seed)
    return np.clip(signal + rng.normal(0.0, params.jitter_sd_w, n), 0.0, params.p_cap_w)


def child_seed(seed: int, index: int) -> int:
    """Independent per-component seed derived from a trace seed."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def synthesize_trace(cfg: ModelConfig, scenario: Optional[NoiseScenario] = None,
                     power_params: Optional[PowerModelParams] = None,
                     thermal_params: Optional[ThermalModelParams] = None,
                     sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
                     duration_s: float = DEFAULT_DURATION_S, seed: int = 0,
                     base_temp_c: float = DEFAULT_BASE_TEMP_C,
                     gpu_name: str = "synthetic-v1") -> Trace:
    profile = get_profile(DEFAULT_PROFILE)
    pp = power_params or profile.power
    tp = thermal_params or profile.thermal
    scenario = scenario or NoiseScenario()
    total = workload_power(cfg, pp, inferences_to_fill(cfg, pp, duration_s),
                           sample_rate_hz, duration_s, seed)
    for i, kind in enumerate(scenario.background, start=1):
        total = total + background_power(kind, pp, sample_rate_hz, duration_s, child_seed(seed, i))
    total = np.clip(total, 0.0, pp.p_cap_w)
    temp = thermal_from_power(total, tp, base_temp_c, sample_rate_hz)
    meta = TraceMeta(source=Source.synthetic, gpu_name=gpu_name, base_temp_c=base_temp_c,
                     label=cfg.label(), scenario=scenario, seed=seed)
    return Trace(total, temp, meta, sample_rate_hz, duration_s)


def build_synthetic_dataset(taxonomy: LabelTaxonomy, per_class: int,
                            scenario: Optional[NoiseScenario] = None,
                            power_params: Optional[PowerModelParams] = None,
                            thermal_params: Optional[ThermalModelParams] = None,
                            sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
                            duration_s: float = DEFAULT_DURATION_S,
                            base_seed: int = 0, leaves=None) -> TraceDataset:
    """``per_class`` traces per leaf; trace i of class c uses seed base_seed + c*per_class + i.

    ``leaves`` restricts generation to a subset of model names (class indices
    still follow the full taxonomy order, so seeds do not shift).
    """
    if per_class < 2:
        raise SimulationError("per_class must be at least 2")
    if not taxonomy.leaves:
        raise SimulationError("taxonomy has no leaves")
    traces = []
    for c, label in enumerate(taxonomy.leaves):
        if leaves is not None and label.model_name not in leaves:
            continue
        cfg = registry_lookup(label.model_name)
        for i in range(per_class):
            traces.append(synthesize_trace(cfg, scenario, power_params, thermal_params,
                                           sample_rate_hz, duration_s,
                                           seed=base_seed + c * per_class + i))
    return TraceDataset(tuple(traces))


@dataclass(frozen=True)
class SimulatorConfig:
    power: PowerModelParams
    thermal: ThermalModelParams
    scenario: NoiseScenario
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    duration_s: float = DEFAULT_DURATION_S
    base_temp_c: float = DEFAULT_BASE_TEMP_C


def _apply(section, base):
    kwargs = {}
    for f in fields(base):
        if f.name in section:
            caster = int if f.name == "tokens_per_inference" else float
            kwargs[f.name] = caster(section[f.name])
    return replace(base, **kwargs)


def load_simulator_config(path=None, text: Optional[str] = None) -> SimulatorConfig:
    """Read ``[power]``, ``[thermal]``, ``[scenario]`` and ``[capture]`` sections.

    ``profile`` under ``[power]`` picks the base values (default a40); every
    dataclass field may be overridden by a key of the same name.
    """
    cp = configparser.ConfigParser()
    if text is not None:
        cp.read_string(text)
    elif path is not None:
        with open(path) as fh:
            cp.read_file(fh)
    power_sec = cp["power"] if cp.has_section("power") else {}
    profile = get_profile(power_sec.get("profile", DEFAULT_PROFILE))
    power = _apply(power_sec, profile.power)
    thermal = _apply(cp["thermal"] if cp.has_section("thermal") else {}, profile.thermal)
    scen_sec = cp["scenario"] if cp.has_section("scenario") else {}
    scenario = NoiseScenario.parse(scen_sec.get("background", ""))
    cap = cp["capture"] if cp.has_section("capture") else {}
    return SimulatorConfig(
        power, thermal, scenario,
        float(cap.get("sample_rate_hz", DEFAULT_SAMPLE_RATE_HZ)),
        float(cap.get("duration_s", DEFAULT_DURATION_S)),
        float(cap.get("base_temp_c", DEFAULT_BASE_TEMP_C)),
    )
