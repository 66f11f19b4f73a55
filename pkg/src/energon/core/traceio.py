"""Line-oriented text format for single traces.

    # sample_rate_hz=7.0
    # duration_s=120.0
    # source=synthetic
    ...
    0.000000,31.204113,28.000000
    0.142857,31.087410,28.002771

Header values are written with ``repr`` so floats survive a read/write cycle,
samples with six fixed decimals. Writing a trace that was read from a file
reproduces the file byte for byte.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .types import Label, NoiseScenario, Source, Trace, TraceMeta

HEADER_KEYS = (
    "sample_rate_hz", "duration_s", "source", "gpu_name", "base_temp_c", "label",
    "scenario", "seed", "has_power", "has_temp", "max_tick_jitter_s",
)


class TraceFormatError(ValueError):
    pass


def _opt(value, fmt=str):
    return "" if value is None else fmt(value)


def format_trace(t: Trace) -> str:
    m = t.meta
    header = {
        "sample_rate_hz": repr(float(t.sample_rate_hz)),
        "duration_s": repr(float(t.duration_s)),
        "source": m.source.value,
        "gpu_name": m.gpu_name,
        "base_temp_c": repr(float(m.base_temp_c)),
        "label": _opt(m.label, Label.encode),
        "scenario": _opt(m.scenario),
        "seed": _opt(m.seed),
        "has_power": str(int(t.has_power)),
        "has_temp": str(int(t.has_temp)),
        "max_tick_jitter_s": _opt(m.max_tick_jitter_s, lambda v: repr(float(v))),
    }
    lines = [f"# {k}={header[k]}" for k in HEADER_KEYS]
    times = t.times()
    for ts, p, c in zip(times, t.power_w, t.temp_c):
        lines.append(f"{ts:.6f},{p:.6f},{c:.6f}")
    return "\n".join(lines) + "\n"


def parse_trace(text: str, origin: str = "<string>") -> Trace:
    header: dict[str, str] = {}
    power, temp = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if not sep:
                raise TraceFormatError(f"{origin}:{lineno}: header line without '='")
            header[key.strip()] = value.strip()
            continue
        cols = line.split(",")
        if len(cols) != 3:
            raise TraceFormatError(f"{origin}:{lineno}: expected 3 columns, got {len(cols)}")
        try:
            power.append(float(cols[1]))
            temp.append(float(cols[2]))
        except ValueError as exc:
            raise TraceFormatError(f"{origin}:{lineno}: {exc}") from None
    missing = [k for k in ("sample_rate_hz", "duration_s", "source") if k not in header]
    if missing:
        raise TraceFormatError(f"{origin}: missing header keys {missing}")
    try:
        meta = TraceMeta(
            source=Source(header["source"]),
            gpu_name=header.get("gpu_name", ""),
            base_temp_c=float(header.get("base_temp_c", "28.0")),
            label=Label.decode(header["label"]) if header.get("label") else None,
            scenario=NoiseScenario.parse(header["scenario"]) if header.get("scenario") else None,
            seed=int(header["seed"]) if header.get("seed") else None,
            max_tick_jitter_s=float(header["max_tick_jitter_s"]) if header.get("max_tick_jitter_s") else None,
        )
        return Trace(
            power_w=np.array(power),
            temp_c=np.array(temp),
            meta=meta,
            sample_rate_hz=float(header["sample_rate_hz"]),
            duration_s=float(header["duration_s"]),
            has_power=header.get("has_power", "1") == "1",
            has_temp=header.get("has_temp", "1") == "1",
        )
    except ValueError as exc:
        raise TraceFormatError(f"{origin}: {exc}") from None


def write_trace(t: Trace, path) -> Path:
    """Write atomically: a crash never leaves a half-written trace behind."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="\n") as fh:
        fh.write(format_trace(t))
    os.replace(tmp, path)
    return path


def read_trace(path) -> Trace:
    path = Path(path)
    with open(path, newline="") as fh:
        return parse_trace(fh.read(), origin=str(path))
