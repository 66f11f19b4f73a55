"""Fixed-rate power/temperature capture from a GPU, a recorded file, or the simulator.

Every backend answers ``sample()`` with one (power, temperature) reading.
``sample_stream`` drives a backend at a fixed tick rate on its own thread;
``await_cooldown`` gates captures on the base temperature; ``record_session``
strings both together into a resumable on-disk session.
"""

from __future__ import annotations

import configparser
import math
import os
import queue
import shutil
import subprocess
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .core.dataset import read_manifest, write_manifest
from .core.traceio import read_trace, write_trace
from .core.types import (
    DEFAULT_BASE_TEMP_C,
    TEMP_MAX_C,
    TEMP_MIN_C,
    Label,
    Source,
    Trace,
    TraceMeta,
    expected_length,
    validate_trace,
)

GPU_INDEX_ENV = "ENERGON_GPU_INDEX"
COOLDOWN_POLL_S = 1.0


class TelemetryError(RuntimeError):
    pass


class BackendError(TelemetryError):
    pass


class VendorParseError(ValueError):
    def __init__(self, column: int, text: str):
        super().__init__(f"column {column}: cannot parse {text!r}")
        self.column = column


class PartialTraceError(TelemetryError):
    def __init__(self, samples: list, cause: BaseException):
        super().__init__(f"backend failed after {len(samples)} samples: {cause}")
        self.samples = samples
        self.cause = cause


class CooldownTimeout(TelemetryError):
    def __init__(self, last_temp_c: float, waited_s: float):
        super().__init__(f"GPU still at {last_temp_c:.2f} C after {waited_s:.0f} s")
        self.last_temp_c = last_temp_c
        self.waited_s = waited_s


class SessionError(TelemetryError):
    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"trace {index}: {cause}")
        self.index = index
        self.cause = cause


# -- clocks -------------------------------------------------------------------

class RealClock:
    virtual = False

    def now(self) -> float:
        return time.monotonic()

    def sleep_until(self, t: float) -> None:
        dt = t - time.monotonic()
        if dt > 0:
            time.sleep(dt)


class VirtualClock:
    """Simulated time: sleeping advances the clock instantly."""

    virtual = True

    def __init__(self, start: float = 0.0):
        self._t = start
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._t

    def sleep_until(self, t: float) -> None:
        with self._lock:
            self._t = max(self._t, t)

    def advance(self, dt: float) -> None:
        with self._lock:
            self._t += dt


# -- plan ---------------------------------------------------------------------

@dataclass(frozen=True)
class CollectionPlan:
    sample_rate_hz: float = 7.0
    duration_s: float = 120.0
    base_temp_c: float = DEFAULT_BASE_TEMP_C
    cooldown_epsilon_c: float = 1.0
    cooldown_timeout_s: float = 600.0
    traces_requested: int = 1
    label: Optional[Label] = None  # workload being captured, when known

    def __post_init__(self):
        if not 1 <= self.sample_rate_hz <= 100:
            raise ValueError("sample_rate_hz must lie in [1, 100]")
        if not self.duration_s > 0:
            raise ValueError("duration_s must be positive")
        if self.cooldown_epsilon_c < 0 or self.cooldown_timeout_s < 0:
            raise ValueError("cooldown epsilon and timeout must be non-negative")
        if self.traces_requested < 1:
            raise ValueError("traces_requested must be positive")

    @property
    def n_samples(self) -> int:
        return expected_length(self.sample_rate_hz, self.duration_s)


# -- backends -----------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    timestamp: float
    power_w: float
    temp_c: float


@dataclass(frozen=True)
class Capabilities:
    has_power: bool = True
    has_temp: bool = True


class TelemetryBackend:
    """One reading per ``sample()`` call; ``begin_capture``/``end_capture`` bracket a trace."""

    capabilities = Capabilities()
    gpu_name = "unknown"
    keeps_recorded_meta = False

    def __init__(self, clock=None):
        self.clock = clock if clock is not None else VirtualClock()

    def sample(self) -> Sample:
        raise NotImplementedError

    def begin_capture(self, index: int) -> None:
        pass

    def end_capture(self) -> None:
        pass

    def capture_meta(self) -> TraceMeta:
        return TraceMeta(source=Source.live, gpu_name=self.gpu_name)

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _check_reading(power: float, temp: float) -> None:
    if not (math.isfinite(power) and power >= 0):
        raise BackendError(f"invalid power reading {power}")
    if not (math.isfinite(temp) and TEMP_MIN_C <= temp <= TEMP_MAX_C):
        raise BackendError(f"temperature reading {temp} outside sanity bounds")


class ScriptedBackend(TelemetryBackend):
    """Returns fixed (power, temp) rows in order; raises once they run out."""

    def __init__(self, rows: Sequence[tuple[float, float]], clock=None, gpu_name: str = "scripted"):
        super().__init__(clock)
        self._rows = list(rows)
        self._pos = 0
        self.gpu_name = gpu_name

    def sample(self) -> Sample:
        if self._pos >= len(self._rows):
            raise BackendError(f"script exhausted after {self._pos} readings")
        p, t = self._rows[self._pos]
        self._pos += 1
        _check_reading(p, t)
        return Sample(self.clock.now(), float(p), float(t))


class _TraceBackend(TelemetryBackend):
    """Plays one stored trace per capture; idles at the last temperature, cooling toward base."""

    def __init__(self, clock=None, idle_power_w: float = 0.0, tau_s: float = 45.0):
        super().__init__(clock)
        self.idle_power_w = idle_power_w
        self.tau_s = tau_s
        self._current: Optional[Trace] = None
        self._pos = 0
        self._idle_from: Optional[tuple[float, float, float]] = None  # (t, temp, base)

    def _trace(self, index: int) -> Trace:
        raise NotImplementedError

    def begin_capture(self, index: int) -> None:
        self._current = self._trace(index)
        self._pos = 0

    def end_capture(self) -> None:
        t = self._current
        if t is not None and self._pos:
            self._idle_from = (self.clock.now(), float(t.temp_c[self._pos - 1]), t.meta.base_temp_c)
        self._current = None

    def capture_meta(self) -> TraceMeta:
        return self._current.meta

    def _idle_temp(self) -> float:
        if self._idle_from is None:
            return DEFAULT_BASE_TEMP_C
        t0, temp, base = self._idle_from
        return base + (temp - base) * math.exp(-(self.clock.now() - t0) / self.tau_s)

    def sample(self) -> Sample:
        now = self.clock.now()
        t = self._current
        if t is None:
            return Sample(now, self.idle_power_w, self._idle_temp())
        if self._pos >= t.n_samples:
            raise BackendError(f"stored trace ended after {t.n_samples} samples")
        i = self._pos
        self._pos += 1
        return Sample(now, float(t.power_w[i]), float(t.temp_c[i]))


class SyntheticBackend(_TraceBackend):
    """Wraps simulator output: ``source(i)`` yields the trace for capture i."""

    def __init__(self, source: Callable[[int], Trace] | Sequence[Trace], clock=None,
                 gpu_name: str = "synthetic-v1", **kw):
        super().__init__(clock, **kw)
        self._source = source
        self.gpu_name = gpu_name

    def _trace(self, index: int) -> Trace:
        return self._source(index) if callable(self._source) else self._source[index]


class ReplayBackend(_TraceBackend):
    """Replays recorded trace files in order, one per capture, metadata included."""

    keeps_recorded_meta = True

    def __init__(self, files: Sequence, clock=None, **kw):
        super().__init__(clock, **kw)
        self._files = [Path(f) for f in files]
        if not self._files:
            raise BackendError("replay needs at least one trace file")
        first = read_trace(self._files[0])
        self.gpu_name = first.meta.gpu_name
        self.capabilities = Capabilities(first.has_power, first.has_temp)

    def _trace(self, index: int) -> Trace:
        if index >= len(self._files):
            raise BackendError(f"no recorded trace for capture {index}")
        return read_trace(self._files[index % len(self._files)])


def parse_vendor_csv(line: str) -> tuple[float, float]:
    """Parse one ``power.draw,temperature.gpu`` row, with or without unit suffixes."""
    parts = line.strip().split(",")
    units = ("W", "C")
    for col in range(2):
        if col >= len(parts):
            raise VendorParseError(col, "")
    if len(parts) > 2:
        raise VendorParseError(2, ",".join(parts[2:]))
    out = []
    for col, (text, unit) in enumerate(zip(parts, units)):
        tok = text.strip()
        if tok.endswith(unit):
            tok = tok[:-1].strip()
        try:
            value = float(tok)
        except ValueError:
            raise VendorParseError(col, text.strip()) from None
        if not math.isfinite(value):
            raise VendorParseError(col, text.strip())
        out.append(value)
    return out[0], out[1]


def vendor_command(period_ms: int, gpu_index: Optional[str] = None) -> list[str]:
    cmd = ["nvidia-smi", "--query-gpu=power.draw,temperature.gpu",
           "--format=csv,noheader,nounits", "-lms", str(int(period_ms))]
    if gpu_index is None:
        gpu_index = os.environ.get(GPU_INDEX_ENV)
    if gpu_index:
        cmd += ["-i", gpu_index]
    return cmd


class LiveBackend(TelemetryBackend):
    """Streams readings from the vendor query tool; ``sample()`` returns the newest row."""

    def __init__(self, period_ms: int = 50, first_row_timeout_s: float = 10.0, clock=None):
        super().__init__(clock if clock is not None else RealClock())
        if shutil.which("nvidia-smi") is None:
            raise BackendError("nvidia-smi not found on PATH")
        self._latest: Optional[tuple[float, float]] = None
        self._error: Optional[BaseException] = None
        self._ready = threading.Event()
        self._timeout = first_row_timeout_s
        index = os.environ.get(GPU_INDEX_ENV)
        self.gpu_name = self._query_name(index)
        try:
            self._proc = subprocess.Popen(vendor_command(period_ms, index), stdout=subprocess.PIPE,
                                          stderr=subprocess.DEVNULL, text=True, bufsize=1)
        except OSError as exc:
            raise BackendError(f"cannot start nvidia-smi: {exc}") from exc
        self._reader = threading.Thread(target=self._read, daemon=True)
        self._reader.start()

    @staticmethod
    def _query_name(index: Optional[str]) -> str:
        cmd = ["nvidia-smi", "--query-gpu=name", "--format=csv,noheader"]
        if index:
            cmd += ["-i", index]
        try:
            out = subprocess.run(cmd, capture_output=True, text=True, timeout=10, check=True).stdout
        except (OSError, subprocess.SubprocessError) as exc:
            raise BackendError(f"nvidia-smi name query failed: {exc}") from exc
        return out.strip().splitlines()[0].strip() if out.strip() else "unknown"

    def _read(self) -> None:
        try:
            for line in self._proc.stdout:
                if line.strip():
                    self._latest = parse_vendor_csv(line)
                    self._ready.set()
            self._error = BackendError(f"nvidia-smi exited with status {self._proc.wait()}")
        except Exception as exc:
            self._error = exc
        self._ready.set()

    def sample(self) -> Sample:
        if not self._ready.wait(self._timeout):
            raise BackendError("no reading from nvidia-smi")
        if self._error is not None:
            raise BackendError(str(self._error))
        p, t = self._latest
        _check_reading(p, t)
        return Sample(self.clock.now(), p, t)

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._reader.join(timeout=5)


# -- protocol -----------------------------------------------------------------

def _sampler(backend, plan, samples, lateness, failure):
    clock = backend.clock
    start = clock.now()
    period = 1.0 / plan.sample_rate_hz
    try:
        for i in range(plan.n_samples):
            nominal = start + i * period
            clock.sleep_until(nominal)  # returns at once when the tick is already late
            lateness.append(max(0.0, clock.now() - nominal))
            samples.append(backend.sample())
    except BaseException as exc:
        failure.append(exc)


def sample_stream(backend: TelemetryBackend, plan: CollectionPlan, capture_index: int = 0) -> Trace:
    """Capture one trace of ``plan.n_samples`` readings at the plan's tick rate."""
    samples: list[Sample] = []
    lateness: list[float] = []
    failure: list[BaseException] = []
    backend.begin_capture(capture_index)
    try:
        meta = backend.capture_meta()
        worker = threading.Thread(target=_sampler, args=(backend, plan, samples, lateness, failure),
                                  name="energon-sampler")
        worker.start()
        worker.join()
    finally:
        backend.end_capture()
    if failure:
        raise PartialTraceError(samples, failure[0])
    if not backend.keeps_recorded_meta:
        meta = replace(meta, base_temp_c=plan.base_temp_c, max_tick_jitter_s=max(lateness),
                       label=plan.label if plan.label is not None else meta.label)
    caps = backend.capabilities
    power = np.array([s.power_w for s in samples]) if caps.has_power else np.zeros(len(samples))
    temp = np.array([s.temp_c for s in samples]) if caps.has_temp else np.zeros(len(samples))
    trace = Trace(power, temp, meta, plan.sample_rate_hz, plan.duration_s,
                  caps.has_power, caps.has_temp)
    problems = validate_trace(trace)
    if problems:
        raise BackendError("captured trace is invalid: " + "; ".join(map(str, problems)))
    return trace


def await_cooldown(backend: TelemetryBackend, plan: CollectionPlan) -> float:
    """Poll once per second until temperature <= base + epsilon; returns seconds waited."""
    if not backend.capabilities.has_temp:
        raise BackendError("cooldown gating needs a temperature channel")
    clock = backend.clock
    start = clock.now()
    limit = plan.base_temp_c + plan.cooldown_epsilon_c
    polls = 0
    while True:
        temp = backend.sample().temp_c
        elapsed = clock.now() - start
        if temp <= limit:
            return elapsed
        if elapsed >= plan.cooldown_timeout_s:
            raise CooldownTimeout(temp, elapsed)
        polls += 1
        clock.sleep_until(start + polls * COOLDOWN_POLL_S)


def trace_filename(index: int) -> str:
    return f"traces/trace_{index:05d}.txt"


def record_session(backend: TelemetryBackend, plan: CollectionPlan, out_dir) -> list[Path]:
    """Capture ``plan.traces_requested`` traces (1-based indices) into ``out_dir``.

    Existing trace files are kept, so an interrupted session resumes where it stopped.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = {r[0]: r for r in read_manifest(out)}
    paths = []
    for index in range(1, plan.traces_requested + 1):
        rel = trace_filename(index)
        path = out / rel
        if not path.exists():
            try:
                await_cooldown(backend, plan)
                trace = sample_stream(backend, plan, index - 1)
            except TelemetryError as exc:
                raise SessionError(index, exc) from exc
            write_trace(trace, path)
            lab = trace.label
            rows[rel] = (rel, lab.family.value, lab.model_name) if lab else (rel, "-", "-")
            write_manifest(out, sorted(rows.values()))
        paths.append(path)
    return paths


def load_plan(path=None, text: Optional[str] = None) -> tuple[CollectionPlan, dict]:
    """Read a ``[plan]`` section plus a free-form ``[backend]`` section."""
    from .core.registry import registry_lookup

    cp = configparser.ConfigParser()
    if text is not None:
        cp.read_string(text)
    elif not cp.read(path):
        raise FileNotFoundError(path)
    sec = cp["plan"] if cp.has_section("plan") else {}
    kwargs = {}
    for name, conv in (("sample_rate_hz", float), ("duration_s", float), ("base_temp_c", float),
                       ("cooldown_epsilon_c", float), ("cooldown_timeout_s", float),
                       ("traces_requested", int)):
        if name in sec:
            kwargs[name] = conv(sec[name])
    if "model" in sec:
        kwargs["label"] = registry_lookup(sec["model"]).label()
    backend = dict(cp["backend"]) if cp.has_section("backend") else {"kind": "live"}
    return CollectionPlan(**kwargs), backend
