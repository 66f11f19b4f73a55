"""Labeled trace collections, holdout splitting and on-disk dataset directories."""

from __future__ import annotations

import hashlib
import math
import os
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .traceio import format_trace, read_trace, write_trace
from .types import Trace

MANIFEST = "manifest"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TraceDataset:
    traces: tuple[Trace, ...]
    split_seed: int = 0
    holdout_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(self.traces))
        if not 0 < self.holdout_fraction < 1:
            raise DatasetError("holdout_fraction must lie in (0, 1)")
        for i, t in enumerate(self.traces):
            if t.label is None:
                raise DatasetError(f"trace {i} carries no label")

    def __len__(self):
        return len(self.traces)

    def __getitem__(self, i):
        return self.traces[i]

    @property
    def model_names(self) -> list[str]:
        return [t.label.model_name for t in self.traces]

    def class_counts(self) -> dict[str, int]:
        return dict(Counter(self.model_names))

    def subset(self, indices) -> "TraceDataset":
        return TraceDataset(tuple(self.traces[i] for i in indices), self.split_seed, self.holdout_fraction)

    def digest(self) -> str:
        h = hashlib.sha256()
        for t in self.traces:
            h.update(format_trace(t).encode())
        return h.hexdigest()


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_holdout(d: TraceDataset) -> tuple[TraceDataset, TraceDataset]:
    """Per-class holdout split, deterministic in ``d.split_seed``.

    Every class keeps at least one test and one training trace.
    """
    by_class: dict[str, list[int]] = {}
    for i, name in enumerate(d.model_names):
        by_class.setdefault(name, []).append(i)
    rng = np.random.default_rng(d.split_seed)
    test_idx = []
    for name in sorted(by_class):
        idx = by_class[name]
        if len(idx) < 2:
            raise DatasetError(f"class {name!r} has {len(idx)} trace(s); need at least 2")
        n_test = min(max(1, _round_half_up(len(idx) * d.holdout_fraction)), len(idx) - 1)
        perm = rng.permutation(len(idx))
        test_idx.extend(idx[j] for j in perm[:n_test])
    test_set = set(test_idx)
    train = [i for i in range(len(d)) if i not in test_set]
    return d.subset(train), d.subset(sorted(test_set))


def write_dataset(d: TraceDataset, out_dir, prefix: str = "trace") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, t in enumerate(d.traces):
        rel = f"traces/{prefix}_{i:05d}.txt"
        write_trace(t, out / rel)
        rows.append((rel, t.label.family.value, t.label.model_name))
    write_manifest(out, rows)
    return out


def write_manifest(out_dir, rows) -> None:
    out = Path(out_dir)
    tmp = out / (MANIFEST + ".tmp")
    with open(tmp, "w", newline="\n") as fh:
        for rel, family, name in rows:
            fh.write(f"{rel}\t{family}\t{name}\n")
    os.replace(tmp, out / MANIFEST)


def read_manifest(out_dir) -> list[tuple[str, str, str]]:
    path = Path(out_dir) / MANIFEST
    if not path.exists():
        return []
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DatasetError(f"{path}:{lineno}: expected 3 tab-separated fields")
            rows.append(tuple(parts))
    return rows


def read_dataset(data_dir, split_seed: int = 0, holdout_fraction: float = 0.2) -> TraceDataset:
    rows = read_manifest(data_dir)
    if not rows:
        raise DatasetError(f"{data_dir}: no manifest rows")
    traces = []
    for rel, family, name in rows:
        t = read_trace(Path(data_dir) / rel)
        if t.label is None or t.label.model_name != name or t.label.family.value != family:
            raise DatasetError(f"{rel}: header label disagrees with manifest ({family}, {name})")
        traces.append(t)
    return TraceDataset(tuple(traces), split_seed, holdout_fraction)
