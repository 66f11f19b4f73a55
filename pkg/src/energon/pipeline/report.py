"""Markdown summaries, confusion-matrix JSON and plot-data files."""

from __future__ import annotations

import json
import os
from pathlib import Path

from ..core.traceio import write_trace
from ..learner.training import EvalReport
from .robustness import RobustnessReport

SUMMARY = "summary.md"
CONFUSION = "confusion.json"
PLOT_DIR = "plots"
FOOTER = ("Max and mean accuracy are taken over cross-validation folds; "
          "the mean is the arithmetic mean of per-fold accuracies.")


class ReportError(ValueError):
    pass


def _pct(x: float) -> str:
    return f"{100 * x:.2f}"


def _eval_table(reports: list[EvalReport]) -> list[str]:
    lines = ["| Stage | Classes | Max Acc. (%) | Avg. Acc. (%) |", "|---|---|---|---|"]
    for r in reports:
        lines.append(f"| {r.stage} | {len(r.class_names)} | {_pct(r.max_accuracy)} | {_pct(r.mean_accuracy)} |")
    return lines


def _robustness_table(r: RobustnessReport) -> list[str]:
    protocol = "trained and tested on noisy traces" if r.train_noisy else "trained clean, tested noisy"
    lines = [f"Stage `{r.stage}`, {protocol}.", "",
             "| Scenario | Max Acc. (%) | Avg. Acc. (%) | Drop (points) |", "|---|---|---|---|"]
    for name, mx, mean, drop in r.rows():
        lines.append(f"| {name} | {_pct(mx)} | {_pct(mean)} | {100 * drop:.2f} |")
    return lines


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def make_report(reports, out_dir, traces=(), title: str = "Extraction report") -> Path:
    """Write the summary, confusion matrices and per-trace plot data; returns the summary path."""
    reports = list(reports)
    traces = list(traces)
    if not reports and not traces:
        raise ReportError("nothing to report")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create {out}: {exc}") from exc

    evals = [r for r in reports if isinstance(r, EvalReport)]
    robust = [r for r in reports if isinstance(r, RobustnessReport)]
    unknown = [r for r in reports if not isinstance(r, (EvalReport, RobustnessReport))]
    if unknown:
        raise ReportError(f"cannot report on {type(unknown[0]).__name__}")

    lines = [f"# {title}", ""]
    if evals:
        lines += ["## Stage accuracy", ""] + _eval_table(evals) + [""]
    for r in robust:
        lines += ["## Noise robustness", ""] + _robustness_table(r) + [""]
    if traces:
        lines += ["## Plot data", "", f"{len(traces)} trace file(s) under `{PLOT_DIR}/`.", ""]
    lines += ["---", FOOTER, ""]

    machine = {"stages": [r.to_dict() for r in evals], "robustness": []}
    for r in robust:
        machine["robustness"].append({
            "stage": r.stage,
            "train_noisy": r.train_noisy,
            "clean": r.clean.to_dict(),
            "scenarios": {k: v.to_dict() for k, v in r.scenarios.items()},
            "drops": r.drops,
        })
    try:
        _write_atomic(out / SUMMARY, "\n".join(lines))
        _write_atomic(out / CONFUSION, json.dumps(machine, indent=2) + "\n")
        for i, t in enumerate(traces):
            write_trace(t, out / PLOT_DIR / f"trace_{i:05d}.txt")
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc}") from exc
    return out / SUMMARY
