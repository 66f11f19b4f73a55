"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 telemetry backend failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .core.dataset import DatasetError, TraceDataset, read_dataset, write_dataset
from .core.registry import UnknownModelError
from .core.taxonomy import get_taxonomy
from .core.traceio import TraceFormatError, read_trace
from .core.types import NoiseScenario
from .features import FeatureError
from .learner.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .learner.model import CnnSpec, ShapeError
from .learner.training import (
    EvalReport,
    TrainConfig,
    TrainingError,
    cross_validate,
    predict_proba,
    stage_data,
)
from .pipeline.hierarchy import (
    UntrainedStageError,
    load_predictor,
    predict_hierarchical,
    save_predictor,
    train_hierarchical,
    train_stage,
)
from .pipeline.report import ReportError, make_report
from .pipeline.robustness import DEFAULT_SCENARIOS, evaluate_robustness
from .pipeline.steps import count_steps
from .simulator import SimulationError, build_synthetic_dataset, load_simulator_config
from .telemetry import (
    LiveBackend,
    ReplayBackend,
    SyntheticBackend,
    TelemetryError,
    load_plan,
    record_session,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3

DATA_ERRORS = (DatasetError, TraceFormatError, FeatureError, CheckpointError, ShapeError,
               SimulationError, TrainingError, UntrainedStageError, ReportError, UnknownModelError,
               FileNotFoundError, KeyError, ValueError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _train_config(args) -> TrainConfig:
    return TrainConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                       seed=args.seed, k_folds=args.folds)


def _load_spec(path, n_classes: int) -> CnnSpec:
    if path is None:
        return CnnSpec(n_classes=n_classes)
    fields = json.loads(Path(path).read_text())
    fields["n_classes"] = n_classes
    return CnnSpec.from_dict({"conv_filters": [32, 16, 8], "pool_after": [True, True, False], **fields})


def _taxonomy_of(dataset: TraceDataset):
    """The registry taxonomy whose leaves cover every trace in the dataset."""
    names = set(dataset.model_names)
    for tax_name in ("language", "vision", "custom"):
        tax = get_taxonomy(tax_name)
        if names <= {l.model_name for l in tax.leaves}:
            return tax
    raise DatasetError("dataset mixes models from several taxonomies")


def cmd_simulate(args) -> int:
    cfg = load_simulator_config(args.config) if args.config else load_simulator_config(text="")
    scenario = NoiseScenario.parse(args.scenario) if args.scenario is not None else cfg.scenario
    tax = get_taxonomy(args.taxonomy)
    d = build_synthetic_dataset(tax, args.per_class, scenario, cfg.power, cfg.thermal,
                                cfg.sample_rate_hz, cfg.duration_s, base_seed=args.seed)
    write_dataset(d, args.out)
    print(f"wrote {len(d)} traces to {args.out} (scenario {scenario}, digest {d.digest()[:16]})")
    return EXIT_OK


def cmd_collect(args) -> int:
    plan, backend_cfg = load_plan(args.plan)
    kind = backend_cfg.get("kind", "live")
    if kind == "live":
        backend = LiveBackend(int(backend_cfg.get("period_ms", 50)))
    elif kind == "replay":
        src = Path(backend_cfg["dir"])
        backend = ReplayBackend(sorted((src / "traces").glob("*.txt")) or sorted(src.glob("*.txt")))
    elif kind == "synthetic":
        from .core.registry import registry_lookup
        from .simulator import get_profile, synthesize_trace

        if plan.label is None:
            raise UsageError("synthetic collection needs [plan] model")
        cfg = registry_lookup(plan.label.model_name)
        prof = get_profile(backend_cfg.get("profile", "a40"))
        scenario = NoiseScenario.parse(backend_cfg.get("scenario", ""))
        seed = int(backend_cfg.get("seed", args.seed))
        backend = SyntheticBackend(
            lambda i: synthesize_trace(cfg, scenario, prof.power, prof.thermal, plan.sample_rate_hz,
                                       plan.duration_s, seed + i, plan.base_temp_c))
    else:
        raise UsageError(f"unknown backend kind {kind!r}")
    with backend:
        paths = record_session(backend, plan, args.out)
    print(f"{len(paths)} traces in {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    d = read_dataset(args.data)
    cfg = _train_config(args)
    if args.stage == "all":
        tax = _taxonomy_of(d)
        spec = _load_spec(args.spec, 1) if args.spec else None
        p = train_hierarchical(d, tax, cfg, spec)
        save_predictor(p, args.out)
        print(f"predictor for taxonomy {tax.name} written to {args.out}")
        return EXIT_OK
    tax = _taxonomy_of(d)
    stage = tax.stage(args.stage)
    spec = _load_spec(args.spec, stage.n_classes)
    if not args.no_cv:
        r = cross_validate(d, stage, spec, cfg)
        print(f"{stage.name}: folds {[round(a, 4) for a in r.fold_accuracies]} "
              f"max {r.max_accuracy:.4f} mean {r.mean_accuracy:.4f}")
    model = train_stage(d, stage, cfg, spec)
    save_checkpoint(model, args.out, stage.classes,
                    {"stage": stage.name, "taxonomy": tax.name, "seed": args.seed})
    print(f"model written to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    d = read_dataset(args.data)
    model, classes, meta = load_checkpoint(args.model)
    tax = get_taxonomy(meta["taxonomy"]) if "taxonomy" in meta else _taxonomy_of(d)
    stage = tax.stage(meta["stage"])
    feats, y = stage_data(d, stage)
    if len(y) == 0:
        raise DatasetError(f"no traces in {args.data} belong to stage {stage.name!r}")
    pred = np.argmax(predict_proba(model, feats), axis=1)
    n = len(classes)
    conf = np.zeros((n, n), dtype=np.int64)
    np.add.at(conf, (y, pred), 1)
    r = EvalReport(stage.name, tuple(classes), [float(np.mean(pred == y))], conf)
    path = make_report([r], args.report, title=f"Evaluation of {Path(args.model).name}")
    print(f"{stage.name}: accuracy {r.mean_accuracy:.4f}; report at {path}")
    return EXIT_OK


def cmd_predict(args) -> int:
    t = read_trace(args.trace)
    p = load_predictor(args.predictor)
    label, results = predict_hierarchical(p, t)
    print(label.model_name)
    for r in results:
        print(f"  {r.stage}: {r.predicted} ({r.confidence:.4f})")
    return EXIT_OK


def cmd_steps(args) -> int:
    t = read_trace(args.trace)
    if not t.has_power:
        raise DatasetError("trace has no power channel")
    print(count_steps(t.power_w, args.window, args.min_rise))
    return EXIT_OK


def cmd_robustness(args) -> int:
    tax = get_taxonomy(args.taxonomy)
    cfg = load_simulator_config(args.config) if args.config else load_simulator_config(text="")
    stage = tax.stage(args.stage) if args.stage else tax.root
    scenarios = ([NoiseScenario.parse(s) for s in args.scenario] if args.scenario
                 else list(DEFAULT_SCENARIOS))
    r = evaluate_robustness(tax, scenarios, cfg.power, cfg.thermal, _train_config(args),
                            per_class=args.per_class, stage=stage, base_seed=args.seed,
                            train_noisy=args.train_noisy)
    path = make_report([r], args.report, title=f"Noise robustness, taxonomy {tax.name}")
    for name, mx, mean, drop in r.rows():
        print(f"{name:40s} max {mx:.4f} mean {mean:.4f} drop {drop:+.4f}")
    print(f"report at {path}")
    return EXIT_OK


def _add_training_args(p, epochs=50, lr=1e-5):
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--lr", type=float, default=lr)
    p.add_argument("--batch-size", type=int, default=16)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="energon", description="Power and thermal side-channel toolkit.")
    parser.add_argument("--seed", type=int, default=0, help="root of all randomness")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic labeled dataset")
    p.add_argument("--config", help="simulator INI file")
    p.add_argument("--taxonomy", required=True, choices=("language", "vision", "custom"))
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scenario", help="background load, e.g. matmul,cnn,vit")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("collect", help="record traces from a telemetry backend")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", help="cross-validate and train one stage, or a full predictor")
    p.add_argument("--data", required=True)
    p.add_argument("--stage", required=True, help="taxonomy stage name, or 'all'")
    p.add_argument("--spec", help="JSON file of network fields")
    p.add_argument("--out", required=True, help="checkpoint file, or directory for --stage all")
    p.add_argument("--no-cv", action="store_true", help="skip cross-validation")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    _add_training_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one trace with a hierarchical predictor")
    p.add_argument("--trace", required=True)
    p.add_argument("--predictor", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("steps", help="count staircase steps in one trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--window", type=int, default=3)
    p.add_argument("--min-rise", type=float, default=0.5)
    p.set_defaults(func=cmd_steps)

    p = sub.add_parser("robustness", help="accuracy under background load")
    p.add_argument("--taxonomy", required=True, choices=("language", "vision", "custom"))
    p.add_argument("--report", required=True)
    p.add_argument("--config", help="simulator INI file")
    p.add_argument("--stage", help="stage to evaluate (default: root)")
    p.add_argument("--scenario", action="append", help="repeatable; default: 1-3 of each kind")
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--train-noisy", action="store_true", help="train inside each scenario")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    _add_training_args(p, epochs=5, lr=1e-3)
    p.set_defaults(func=cmd_robustness)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"energon: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TelemetryError as exc:
        print(f"energon: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except DATA_ERRORS as exc:
        print(f"energon: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
