import json

import pytest

from energon.cli import EXIT_BACKEND, EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from energon.core import read_dataset


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["simulate", "--taxonomy", "language", "--per-class", "8", "--out", str(out), "--seed", "3"]) == 0
    return out


def test_simulate_writes_dataset(data_dir):
    d = read_dataset(data_dir)
    assert len(d) == 64 and d.traces[0].meta.seed == 3


def test_simulate_with_scenario_and_config(tmp_path):
    cfg = tmp_path / "sim.ini"
    cfg.write_text("[power]\nprofile = gtx1660ti\n[capture]\nduration_s = 60\n")
    out = tmp_path / "d"
    assert main(["simulate", "--config", str(cfg), "--taxonomy", "vision", "--per-class", "2",
                 "--out", str(out), "--scenario", "matmul"]) == 0
    t = read_dataset(out).traces[0]
    assert t.n_samples == 420 and str(t.meta.scenario) == "matmul" and t.power_w.max() <= 80.0


def test_train_eval_predict_steps(data_dir, tmp_path, capsys):
    ckpt = tmp_path / "fam.ckpt"
    assert main(["train", "--data", str(data_dir), "--stage", "family", "--out", str(ckpt),
                 "--epochs", "3", "--lr", "1e-3", "--folds", "2"]) == EXIT_OK
    assert main(["eval", "--data", str(data_dir), "--model", str(ckpt), "--report", str(tmp_path / "r")]) == 0
    doc = json.loads((tmp_path / "r" / "confusion.json").read_text())
    assert doc["stages"][0]["stage"] == "family"

    pred = tmp_path / "pred"
    assert main(["train", "--data", str(data_dir), "--stage", "all", "--out", str(pred),
                 "--epochs", "3", "--lr", "1e-3", "--no-cv"]) == 0
    assert (pred / "predictor.json").exists()
    trace = data_dir / "traces" / "trace_00000.txt"
    capsys.readouterr()
    assert main(["predict", "--trace", str(trace), "--predictor", str(pred)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "t5-small" and out[1].strip().startswith("family: T5")

    assert main(["steps", "--trace", str(trace)]) == 0
    assert capsys.readouterr().out.startswith("steps=12 ")


def test_collect_synthetic_plan(tmp_path):
    plan = tmp_path / "plan.ini"
    plan.write_text("[plan]\ntraces_requested = 2\nduration_s = 30\nmodel = t5-base\n"
                    "[backend]\nkind = synthetic\nseed = 4\n")
    assert main(["collect", "--plan", str(plan), "--out", str(tmp_path / "c")]) == 0
    assert len(read_dataset(tmp_path / "c")) == 2


def test_collect_replay_plan(tmp_path, data_dir):
    plan = tmp_path / "plan.ini"
    plan.write_text(f"[plan]\ntraces_requested = 3\n[backend]\nkind = replay\ndir = {data_dir}\n")
    assert main(["collect", "--plan", str(plan), "--out", str(tmp_path / "c")]) == 0
    first = (tmp_path / "c" / "traces" / "trace_00001.txt").read_text()
    assert first == (data_dir / "traces" / "trace_00000.txt").read_text()


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--taxonomy", "language"])
    assert exc.value.code == EXIT_USAGE


def test_data_errors_exit_two(tmp_path):
    assert main(["steps", "--trace", str(tmp_path / "missing.txt")]) == EXIT_DATA
    bad = tmp_path / "bad.txt"
    bad.write_text("not a trace\n")
    assert main(["steps", "--trace", str(bad)]) == EXIT_DATA


def test_backend_errors_exit_three(tmp_path, monkeypatch):
    monkeypatch.setenv("PATH", str(tmp_path))
    plan = tmp_path / "plan.ini"
    plan.write_text("[plan]\ntraces_requested = 1\n[backend]\nkind = live\n")
    assert main(["collect", "--plan", str(plan), "--out", str(tmp_path / "c")]) == EXIT_BACKEND


def test_robustness_command(tmp_path, capsys):
    assert main(["robustness", "--taxonomy", "language", "--report", str(tmp_path), "--stage", "META:layers",
                 "--scenario", "matmul", "--per-class", "4", "--folds", "2", "--epochs", "1"]) == 0
    assert "matmul" in (tmp_path / "summary.md").read_text()
