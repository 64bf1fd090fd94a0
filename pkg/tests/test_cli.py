import json

import pytest
from click.testing import CliRunner

from amlgraph.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def _write_cfg(tmp_path, out_dir, extra=""):
    tx_path = tmp_path / "tx.csv"
    truth_path = tmp_path / "truth.jsonl"
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(
        f"dataset:\n  path: {tx_path}\n"
        f"evaluate:\n  truth_path: {truth_path}\n"
        f"detect:\n  n_trees: 20\n"
        f"output_dir: {out_dir}\n" + extra
    )
    return cfg_path, tx_path, truth_path


def test_synth_writes_dataset(runner, tmp_path):
    tx_out = tmp_path / "tx.csv"
    truth_out = tmp_path / "truth.jsonl"
    result = runner.invoke(main, [
        "synth", "--accounts", "40", "--transactions", "150",
        "--pattern", "FAN_IN:1:4",
        "--out-transactions", str(tx_out), "--out-truth", str(truth_out),
    ])
    assert result.exit_code == 0, result.output
    assert tx_out.exists() and truth_out.exists()
    assert "1 flows" in result.output


def test_synth_bad_pattern_is_config_error(runner, tmp_path):
    result = runner.invoke(main, [
        "synth", "--pattern", "NOT_A_PATTERN:1:4",
        "--out-transactions", str(tmp_path / "a.csv"),
        "--out-truth", str(tmp_path / "b.jsonl"),
    ])
    assert result.exit_code == 2


def test_bad_config_exits_two(runner, tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("reduction:\n  method: RM9\n")
    result = runner.invoke(main, ["--config", str(cfg), "pipeline"])
    assert result.exit_code == 2
    assert "config error" in result.output


def test_unknown_key_exits_two(runner, tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("communityes: {}\n")
    result = runner.invoke(main, ["--config", str(cfg), "ingest"])
    assert result.exit_code == 2


def test_stage_failure_exits_one(runner, tmp_path):
    cfg, _, _ = _write_cfg(tmp_path, tmp_path / "out")
    # no upstream artifacts exist yet, so a mid-pipeline stage must fail
    result = runner.invoke(main, ["--config", str(cfg), "graph"])
    assert result.exit_code == 1
    assert "failed" in result.output


def test_full_pipeline_and_timings(runner, tmp_path):
    out_dir = tmp_path / "out"
    cfg, tx_path, truth_path = _write_cfg(tmp_path, out_dir)
    synth = runner.invoke(main, [
        "synth", "--accounts", "40", "--transactions", "150",
        "--pattern", "FAN_IN:1:4",
        "--out-transactions", str(tx_path), "--out-truth", str(truth_path),
    ])
    assert synth.exit_code == 0, synth.output

    result = runner.invoke(main, ["--config", str(cfg), "pipeline"])
    assert result.exit_code == 0, result.output
    assert (out_dir / "evaluation.json").exists()

    timings = runner.invoke(main, ["--config", str(cfg), "timings",
                                   "--csv", str(tmp_path / "timings.csv")])
    assert timings.exit_code == 0, timings.output
    assert "communities" in timings.output
    assert (tmp_path / "timings.csv").read_text().startswith("stage,")


def test_stage_by_stage_matches_pipeline(runner, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    cfg_a, tx_path, truth_path = _write_cfg(tmp_path, out_a)
    runner.invoke(main, [
        "synth", "--accounts", "40", "--transactions", "150",
        "--pattern", "FAN_IN:1:4",
        "--out-transactions", str(tx_path), "--out-truth", str(truth_path),
    ])
    assert runner.invoke(main, ["--config", str(cfg_a), "pipeline"]).exit_code == 0

    cfg_b = tmp_path / "cfg_b.yaml"
    cfg_b.write_text(cfg_a.read_text().replace(str(out_a), str(out_b)))
    for stage in ("ingest", "reduce", "graph", "communities", "features", "detect", "evaluate"):
        result = runner.invoke(main, ["--config", str(cfg_b), stage])
        assert result.exit_code == 0, f"{stage}: {result.output}"
    for name in ("alerts.jsonl", "evaluation.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_global_out_override(runner, tmp_path):
    out_dir = tmp_path / "cli-out"
    cfg, tx_path, truth_path = _write_cfg(tmp_path, tmp_path / "ignored")
    runner.invoke(main, [
        "synth", "--accounts", "40", "--transactions", "150",
        "--out-transactions", str(tx_path), "--out-truth", str(truth_path),
    ])
    result = runner.invoke(main, ["--config", str(cfg), "--out", str(out_dir), "ingest"])
    assert result.exit_code == 0, result.output
    assert (out_dir / "transactions.csv").exists()


def test_seed_override_changes_model(runner, tmp_path):
    out_dir = tmp_path / "out"
    cfg, tx_path, truth_path = _write_cfg(tmp_path, out_dir)
    runner.invoke(main, [
        "synth", "--accounts", "40", "--transactions", "150",
        "--pattern", "FAN_IN:1:4",
        "--out-transactions", str(tx_path), "--out-truth", str(truth_path),
    ])
    assert runner.invoke(main, ["--config", str(cfg), "--seed", "123", "pipeline"]).exit_code == 0
    model = json.loads((out_dir / "model.json").read_text())
    assert model["rng_seed"] == 123
