import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest

from optical_esn import cli, harness
from optical_esn.errors import ConfigError, StageError
from optical_esn.harness import (
    AGGREGATE_HEADER,
    ExperimentConfig,
    aggregate,
    bench_throughput,
    load_config,
    run_experiment,
    run_size_sweep,
)


def small(tmp_path, size=256, seed=1, **kw):
    cfg = ExperimentConfig(train_steps=500, test_steps=100, output_dir=str(tmp_path), **kw)
    return cfg.with_overrides(size=size, seed=seed)


def test_smoke_experiment(tmp_path):
    cfg = small(tmp_path)
    r = run_experiment(cfg)
    assert r.status == "ok" and r.error is None
    assert r.init_time_s >= 0 and r.iter_time_s_per_1000 >= 0
    assert r.train_score <= 1 and r.test_score <= 1
    assert 0.5 < r.test_score
    assert 0 <= r.activation["min"] <= r.activation["mean"] <= r.activation["max"] <= 1
    assert r.activation["steps"] == 600
    assert r.camera_gain > 0
    assert r.readout["width"] == 257 and len(r.readout["weights"]) == 257
    assert r.started_at and r.finished_at and r.code_version

    report = json.loads((tmp_path / f"report.{cfg.run_id}.json").read_text())
    assert report["test_score"] == r.test_score
    assert report["config"] == cfg.to_dict()
    rows = (tmp_path / f"predictions.{cfg.run_id}.csv").read_text().splitlines()
    assert rows[0] == "t,target,prediction"
    assert len(rows) == 101
    assert rows[1].split(",")[0] == "500"


def test_table_row_columns(tmp_path):
    r = run_experiment(small(tmp_path, size=64), write=False)
    assert list(r.table_row()) == ["ESN size", "Init time", "Time per 1000 iter", "Performance"]


def test_same_seed_same_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    ra = run_experiment(small(a, seed=7))
    rb = run_experiment(replace(small(b, seed=7), workers=1))
    assert ra.test_score == rb.test_score and ra.train_score == rb.train_score
    name = f"predictions.{small(a, seed=7).run_id}.csv"
    assert (a / name).read_bytes() == (b / name).read_bytes()
    assert run_experiment(small(b, seed=8), write=False).test_score != ra.test_score


def test_quantile_mode_experiment(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "seed": 2, "train_steps": 300, "test_steps": 50, "output_dir": str(tmp_path),
        "reservoir": {"n_neurons": 128, "washout": 20, "threshold": {"mode": "quantile"}},
    })
    assert cfg.reservoir.camera is None
    r = run_experiment(cfg)
    assert r.camera_gain is None
    assert r.activation["mean"] == pytest.approx(0.5, abs=0.01)


def test_parallel_instances_experiment(tmp_path):
    r = run_experiment(small(tmp_path, size=64).with_overrides(instances=3), write=False)
    assert r.readout["width"] == 3 * 64 + 1
    assert r.table_row()["ESN size"] == 192


def test_failure_names_stage_and_cleans_up(tmp_path, monkeypatch):
    def broken(*a, **k):
        raise RuntimeError("boom")

    monkeypatch.setattr(harness, "fit", broken)
    with pytest.raises(StageError) as info:
        run_experiment(small(tmp_path, size=32))
    assert info.value.stage == "fit"
    assert list(tmp_path.iterdir()) == []


def test_write_failure_leaves_nothing(tmp_path, monkeypatch):
    calls = []
    real = harness._atomic_write

    def flaky(path, text):
        calls.append(path)
        if path.name.startswith("report."):
            raise OSError("disk full")
        real(path, text)

    monkeypatch.setattr(harness, "_atomic_write", flaky)
    with pytest.raises(StageError) as info:
        run_experiment(small(tmp_path, size=32))
    assert info.value.stage == "write"
    assert list(tmp_path.iterdir()) == []


def test_config_round_trip_and_yaml(tmp_path):
    cfg = small(tmp_path, size=100, seed=3)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    path = tmp_path / "exp.yaml"
    path.write_text(
        "seed: 4\ntrain_steps: 300\ntest_steps: 20\n"
        "mg: {tau: 17, transient_steps: 500}\n"
        "reservoir: {n_neurons: 64, washout: 10, threshold: {fixed_dn: 20}, camera: {target_mean_dn: 40}}\n"
        "ridge: {alpha: 5}\n"
    )
    loaded = load_config(path)
    assert loaded.seed == 4 and loaded.size == 64 and loaded.ridge.alpha == 5
    assert loaded.reservoir.threshold.fixed_dn == 20 and loaded.reservoir.camera.target_mean_dn == 40
    assert loaded.mg.transient_steps == 500


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": 1},
        {"mg": {"tau_": 3}},
        {"reservoir": {"n_neurons": 10, "leak": 0.3}},
        {"reservoir": {"threshold": {"level": 3}}},
        {"ridge": {"lambda": 1}},
        {"train_steps": 50},
        {"test_steps": 0},
    ],
)
def test_config_rejects(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_seed_derivation_is_domain_separated():
    m, r = harness.derived_seeds(0)
    assert m != r and harness.derived_seeds(0) == (m, r)
    assert harness.derived_seeds(1) != (m, r)


def test_sweep_counts_and_aggregate(tmp_path):
    cfg = small(tmp_path, seed=10)
    reports = run_size_sweep(cfg, [32, 64], 2)
    assert [r.run_id for r in reports] == ["n32-k1-s10", "n32-k1-s11", "n64-k1-s10", "n64-k1-s11"]
    with open(tmp_path / "sweep_aggregate.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == AGGREGATE_HEADER
    for row in rows:
        scores = [r.test_score for r in reports if r.size == int(row["size"])]
        assert int(row["seed_count"]) == 2
        assert float(row["mean_test_score"]) == pytest.approx(np.mean(scores), rel=1e-11)
        assert float(row["std_test_score"]) == pytest.approx(np.std(scores, ddof=1), rel=1e-10)


def test_sweep_single_run_matches_experiment(tmp_path):
    cfg = small(tmp_path, size=64, seed=5)
    [r] = run_size_sweep(cfg, [64], 1, write=False)
    assert r.test_score == run_experiment(cfg, write=False).test_score


def test_sweep_records_failures(tmp_path):
    cfg = small(tmp_path, seed=1)
    cfg = replace(cfg, reservoir=replace(cfg.reservoir, memory_budget=50 << 20))
    reports = run_size_sweep(cfg, [32, 2048], 1)
    assert [r.status for r in reports] == ["ok", "failed"]
    assert "transfer_matrix" in reports[1].error
    rows = aggregate(reports)
    assert rows[1]["seed_count"] == 0 and math.isnan(rows[1]["mean_test_score"])
    assert (tmp_path / "sweep_aggregate.csv").exists()
    with pytest.raises(ConfigError):
        run_size_sweep(cfg, [], 1)


def test_bench_record(tmp_path):
    rec = bench_throughput(small(tmp_path, size=128), 200)
    assert rec.n_steps == 200 and rec.size == 128
    assert rec.iter_time_s_per_1000 == pytest.approx(rec.elapsed_s * 5)
    assert rec.init_time_s >= 0
    with pytest.raises(ConfigError):
        bench_throughput(small(tmp_path), 99)


def test_bench_is_repeatable(tmp_path):
    cfg = small(tmp_path, size=2048)
    # best of three per side absorbs scheduler noise on a shared machine
    a = min(bench_throughput(cfg, 300).iter_time_s_per_1000 for _ in range(3))
    b = min(bench_throughput(cfg, 300).iter_time_s_per_1000 for _ in range(3))
    assert abs(a - b) / min(a, b) < 0.2


def test_cli_generate(tmp_path, capsys):
    assert cli.main(["generate", "--out", str(tmp_path), "--length", "50"]) == 0
    lines = (tmp_path / "mackey_glass.csv").read_text().splitlines()
    assert lines[0] == "t,u" and len(lines) == 51


def test_cli_run_and_sweep(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("train_steps: 200\ntest_steps: 30\nreservoir: {n_neurons: 32, washout: 20}\n")
    assert cli.main(["run", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path), "--size", "48"]) == 0
    row = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert row["ESN size"] == 48
    assert (tmp_path / "report.n48-k1-s3.json").exists()
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "sw"), "--sizes", "16,32",
                     "--seeds-per-size", "1"]) == 0
    assert (tmp_path / "sw" / "sweep_aggregate.csv").exists()
    assert cli.main(["bench", "--config", str(cfg), "--out", str(tmp_path), "--sizes", "32,64", "--steps", "100"]) == 0
    out = [json.loads(l) for l in capsys.readouterr().out.strip().splitlines()[-2:]]
    assert [o["ESN size"] for o in out] == [32, 64]


def test_cli_bad_config(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("nonsense: 1\n")
    assert cli.main(["run", "--config", str(cfg)]) == 1
    assert "nonsense" in capsys.readouterr().err
