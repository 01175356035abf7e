"""End-to-end experiments, size sweeps and throughput benchmarks."""

from __future__ import annotations

import contextlib
import csv
import dataclasses
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml
from threadpoolctl import threadpool_limits

from optical_esn import __version__
from optical_esn.encoding import calibrate
from optical_esn.errors import ConfigError, StageError
from optical_esn.optics import CameraModel, ThresholdConfig, build_transfer_matrix, calibrate_gain
from optical_esn.readout import RidgeConfig, fit, predict, score
from optical_esn.reservoir import ReservoirConfig, drive, init_state, instance_config, run_parallel
from optical_esn.seeding import DOMAIN_MATRIX, DOMAIN_RESERVOIR, MASK64, check_seed, derive_seed
from optical_esn.timeseries import MgParams, generate_mackey_glass, make_supervised

log = logging.getLogger(__name__)

WARMUP_FRAMES = 32
BENCH_WARMUP_STEPS = 10
AGGREGATE_HEADER = ["size", "seed_count", "mean_test_score", "std_test_score", "mean_iter_time_s_per_1000"]


@dataclass(frozen=True)
class ExperimentConfig:
    mg: MgParams = field(default_factory=MgParams)
    encoder_width: int = 1000
    reservoir: ReservoirConfig = field(
        default_factory=lambda: ReservoirConfig(
            n_neurons=4096, threshold=ThresholdConfig(mode="fixed_dn"), camera=CameraModel()
        )
    )
    ridge: RidgeConfig = field(default_factory=RidgeConfig)
    train_steps: int = 2000
    test_steps: int = 500
    n_instances: int = 1
    output_dir: str = "runs"
    seed: int = 0
    workers: int | None = None

    def __post_init__(self):
        if self.reservoir.input_width != self.encoder_width:
            raise ConfigError("reservoir.input_width must equal encoder_width")
        if self.train_steps <= self.reservoir.washout:
            raise ConfigError(f"train_steps ({self.train_steps}) must exceed washout ({self.reservoir.washout})")
        if self.test_steps < 1:
            raise ConfigError("test_steps must be >= 1")
        if self.n_instances < 1:
            raise ConfigError("n_instances must be >= 1")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be >= 1")
        check_seed(self.seed)

    @property
    def size(self) -> int:
        return self.reservoir.n_neurons

    @property
    def run_id(self) -> str:
        return f"n{self.size}-k{self.n_instances}-s{self.seed}"

    def with_overrides(self, *, seed=None, size=None, instances=None, output_dir=None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if size is not None:
            cfg = replace(cfg, reservoir=replace(cfg.reservoir, n_neurons=int(size)))
        if instances is not None:
            cfg = replace(cfg, n_instances=int(instances))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        return cfg

    def to_dict(self) -> dict:
        r = self.reservoir
        camera = {"target_mean_dn": r.camera.target_mean_dn} if r.camera is not None else None
        return {
            "seed": self.seed,
            "train_steps": self.train_steps,
            "test_steps": self.test_steps,
            "n_instances": self.n_instances,
            "output_dir": self.output_dir,
            "workers": self.workers,
            "mg": dataclasses.asdict(self.mg),
            "encoder": {"width": self.encoder_width},
            "reservoir": {
                "n_neurons": r.n_neurons,
                "washout": r.washout,
                "batch_size": r.batch_size,
                "memory_budget": r.memory_budget,
                "threshold": dataclasses.asdict(r.threshold),
                "camera": camera,
            },
            "ridge": {"alpha": self.ridge.alpha},
        }

    @classmethod
    def from_dict(cls, data: dict | None) -> "ExperimentConfig":
        data = dict(data or {})
        _reject_unknown(data, ["seed", "train_steps", "test_steps", "n_instances", "output_dir", "workers",
                               "mg", "encoder", "reservoir", "ridge"], "config")
        mg = data.pop("mg", None) or {}
        _reject_unknown(mg, [f.name for f in dataclasses.fields(MgParams)], "mg")
        enc = data.pop("encoder", None) or {}
        _reject_unknown(enc, ["width"], "encoder")
        width = int(enc.get("width", 1000))
        res = dict(data.pop("reservoir", None) or {})
        _reject_unknown(res, ["n_neurons", "washout", "batch_size", "memory_budget", "threshold", "camera"], "reservoir")
        thr = res.pop("threshold", None) or {}
        _reject_unknown(thr, ["mode", "fixed_dn", "quantile"], "reservoir.threshold")
        threshold = ThresholdConfig(**{"mode": "fixed_dn", **thr})
        cam = res.pop("camera", None)
        camera = None
        if cam is not None or threshold.mode == "fixed_dn":
            cam = cam or {}
            _reject_unknown(cam, ["target_mean_dn"], "reservoir.camera")
            camera = CameraModel(**cam)
        reservoir = ReservoirConfig(
            n_neurons=int(res.pop("n_neurons", 4096)), input_width=width, threshold=threshold, camera=camera, **res
        )
        ridge = data.pop("ridge", None) or {}
        _reject_unknown(ridge, ["alpha"], "ridge")
        try:
            return cls(mg=MgParams(**mg), encoder_width=width, reservoir=reservoir, ridge=RidgeConfig(**ridge), **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _reject_unknown(section: dict, allowed: Sequence[str], name: str):
    if not isinstance(section, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(extra)}")


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    """Read an experiment config from YAML (JSON is accepted too)."""
    with open(path) as fh:
        return ExperimentConfig.from_dict(yaml.safe_load(fh))


@dataclass
class RunReport:
    run_id: str
    config: dict
    status: str = "ok"
    init_time_s: float = math.nan
    iter_time_s_per_1000: float = math.nan
    train_score: float = math.nan
    test_score: float = math.nan
    activation: dict = field(default_factory=dict)
    camera_gain: float | None = None
    encoder: dict = field(default_factory=dict)
    readout: dict = field(default_factory=dict)
    started_at: str = ""
    finished_at: str = ""
    code_version: str = __version__
    error: str | None = None

    @property
    def size(self) -> int:
        return self.config["reservoir"]["n_neurons"]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def table_row(self) -> dict:
        """The columns of a size/time/performance results table."""
        return {
            "ESN size": self.size * self.config["n_instances"],
            "Init time": self.init_time_s,
            "Time per 1000 iter": self.iter_time_s_per_1000,
            "Performance": self.test_score,
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _blas_limit(workers):
    return threadpool_limits(limits=workers) if workers else contextlib.nullcontext()


def derived_seeds(master: int) -> tuple[int, int]:
    """(transfer-matrix seed, reservoir seed) for a master seed."""
    return derive_seed(master, DOMAIN_MATRIX), derive_seed(master, DOMAIN_RESERVOIR)


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def calibrate_camera(rcfg: ReservoirConfig, H, encoder, inputs) -> CameraModel:
    """Fit the camera gain on a 32-frame warmup batch from instance 0.

    Mean intensity follows the input popcount, so the warmup inputs are spread
    evenly over ``inputs`` rather than taken from its start. A first pass
    thresholds at the per-frame median (scale-free) to get provisional frames;
    a second pass runs the fixed-DN dynamics with the provisional gain, so the
    final gain reflects operating-point intensities.
    """
    template = rcfg.camera or CameraModel()
    x0 = init_state(instance_config(rcfg, 0)).bits[None, :]
    inputs = np.asarray(inputs)
    warm = inputs[np.linspace(0, len(inputs) - 1, min(WARMUP_FRAMES, len(inputs))).astype(int)]
    probe = replace(rcfg, threshold=ThresholdConfig(mode="quantile"), camera=None)
    _, _, speckles = drive(probe, H, encoder, warm, x0, collect_speckle=True)
    camera = calibrate_gain(template, speckles)
    _, _, speckles = drive(replace(rcfg, camera=camera), H, encoder, warm, x0, collect_speckle=True)
    return calibrate_gain(template, speckles)


@dataclass
class _Prepared:
    rcfg: ReservoirConfig
    H: Any
    encoder: Any
    inputs: np.ndarray
    targets: np.ndarray
    init_time_s: float


def _prepare(cfg: ExperimentConfig, length: int) -> _Prepared:
    """Data, encoder, timed matrix construction and camera calibration."""
    with _stage("data"):
        series = generate_mackey_glass(cfg.mg, length + 1)
        sup = make_supervised(series)
    with _stage("encoder"):
        n_fit = min(cfg.train_steps, length)
        encoder = calibrate(cfg.encoder_width, sup.inputs[:n_fit])
    matrix_seed, reservoir_seed = derived_seeds(cfg.seed)
    rcfg = replace(cfg.reservoir, seed=reservoir_seed)
    with _stage("transfer_matrix"):
        t0 = time.perf_counter()
        H = build_transfer_matrix(rcfg.n_neurons, rcfg.frame_width, matrix_seed, rcfg.memory_budget)
        H.input_prefix(rcfg.input_width)
        init_time = time.perf_counter() - t0
    if rcfg.threshold.mode == "fixed_dn":
        with _stage("camera_calibration"):
            rcfg = replace(rcfg, camera=calibrate_camera(rcfg, H, encoder, sup.inputs[:n_fit]))
    return _Prepared(rcfg, H, encoder, sup.inputs, sup.targets, init_time)


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_predictions(path: Path, t0: int, targets, predictions):
    lines = ["t,target,prediction"]
    lines += [f"{t0 + i},{y:.12g},{p:.12g}" for i, (y, p) in enumerate(zip(targets, predictions))]
    _atomic_write(path, "\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunReport:
    """Generate data, train the readout on the train pass, score a teacher-forced test pass.

    Writes ``report.<run-id>.json`` and ``predictions.<run-id>.csv`` into
    ``cfg.output_dir`` unless ``write`` is false. On failure a
    :class:`StageError` names the stage and no partial files remain.
    """
    report = RunReport(run_id=cfg.run_id, config=cfg.to_dict(), started_at=_now())
    out = Path(cfg.output_dir)
    paths = [out / f"report.{cfg.run_id}.json", out / f"predictions.{cfg.run_id}.csv"]
    try:
        with _blas_limit(cfg.workers):
            prep = _prepare(cfg, cfg.train_steps + cfg.test_steps)
            rcfg, H, encoder = prep.rcfg, prep.H, prep.encoder
            n_train = cfg.train_steps
            with _stage("train"):
                t0 = time.perf_counter()
                train = run_parallel(rcfg, H, encoder, prep.inputs[:n_train], prep.targets[:n_train], cfg.n_instances)
                elapsed = time.perf_counter() - t0
            with _stage("fit"):
                model = fit(cfg.ridge, train)
                train_score = score(predict(model, train), train.targets)
            with _stage("test"):
                test_cfg = replace(rcfg, washout=0)
                sl = slice(n_train, n_train + cfg.test_steps)
                test = run_parallel(test_cfg, H, encoder, prep.inputs[sl], prep.targets[sl],
                                    cfg.n_instances, initial_states=train.final_states)
                test_pred = predict(model, test)
                test_score = score(test_pred, test.targets)
        activity = np.concatenate([train.activity, test.activity])
        report.init_time_s = prep.init_time_s
        report.iter_time_s_per_1000 = elapsed / n_train * 1000.0
        report.train_score = train_score
        report.test_score = test_score
        report.activation = {
            "mean": float(activity.mean()),
            "std": float(activity.std()),
            "min": float(activity.min()),
            "max": float(activity.max()),
            "steps": int(activity.size),
        }
        report.camera_gain = rcfg.camera.gain if rcfg.camera is not None else None
        report.encoder = {"width": encoder.width, "lo": encoder.lo, "hi": encoder.hi}
        report.readout = model.to_dict()
        report.finished_at = _now()
        if write:
            with _stage("write"):
                out.mkdir(parents=True, exist_ok=True)
                write_predictions(paths[1], n_train, test.targets, test_pred)
                _atomic_write(paths[0], json.dumps(report.to_dict(), indent=2))
    except BaseException:
        for p in paths:
            for q in (p, p.with_name(p.name + ".tmp")):
                with contextlib.suppress(FileNotFoundError):
                    q.unlink()
        raise
    log.info("run %s: train R2 %.4f, test R2 %.4f", cfg.run_id, report.train_score, report.test_score)
    return report


def run_size_sweep(cfg: ExperimentConfig, sizes: Sequence[int], seeds_per_size: int, write: bool = True) -> list[RunReport]:
    """One experiment per (size, seed), seeds ``cfg.seed + j``.

    Failed runs come back with ``status == "failed"`` and the error message;
    the sweep carries on. ``sweep_aggregate.csv`` summarizes successful runs.
    """
    if len(sizes) == 0:
        raise ConfigError("sizes must be nonempty")
    if seeds_per_size < 1:
        raise ConfigError("seeds_per_size must be >= 1")
    reports = []
    for size in sizes:
        for j in range(seeds_per_size):
            run_cfg = cfg.with_overrides(size=size, seed=(cfg.seed + j) & MASK64)
            try:
                reports.append(run_experiment(run_cfg, write=write))
            except Exception as exc:
                log.warning("sweep run %s failed: %s", run_cfg.run_id, exc)
                reports.append(RunReport(run_id=run_cfg.run_id, config=run_cfg.to_dict(), status="failed",
                                         error=str(exc), finished_at=_now()))
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_aggregate(out / "sweep_aggregate.csv", aggregate(reports))
    return reports


def aggregate(reports: Sequence[RunReport]) -> list[dict]:
    rows = []
    sizes = list(dict.fromkeys(r.size for r in reports))
    for size in sizes:
        ok = [r for r in reports if r.size == size and r.status == "ok"]
        scores = np.array([r.test_score for r in ok])
        iters = np.array([r.iter_time_s_per_1000 for r in ok])
        rows.append({
            "size": size,
            "seed_count": len(ok),
            "mean_test_score": float(scores.mean()) if ok else math.nan,
            "std_test_score": float(scores.std(ddof=1)) if len(ok) > 1 else 0.0 if ok else math.nan,
            "mean_iter_time_s_per_1000": float(iters.mean()) if ok else math.nan,
        })
    return rows


def write_aggregate(path: Path, rows: list[dict]):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=AGGREGATE_HEADER)
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in row.items()})
    os.replace(tmp, path)


@dataclass
class BenchRecord:
    size: int
    n_instances: int
    n_steps: int
    init_time_s: float
    elapsed_s: float
    iter_time_s_per_1000: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def bench_throughput(cfg: ExperimentConfig, n_steps: int) -> BenchRecord:
    """Time ``n_steps`` reservoir updates after 10 untimed warmup steps."""
    if n_steps < 100:
        raise ConfigError(f"n_steps must be >= 100, got {n_steps}")
    bench_cfg = replace(cfg, train_steps=max(cfg.train_steps, n_steps + BENCH_WARMUP_STEPS))
    with _blas_limit(cfg.workers):
        prep = _prepare(bench_cfg, n_steps + BENCH_WARMUP_STEPS)
        rcfg = prep.rcfg
        states = np.stack([init_state(instance_config(rcfg, k)).bits for k in range(cfg.n_instances)])
        warm, timed = prep.inputs[:BENCH_WARMUP_STEPS], prep.inputs[BENCH_WARMUP_STEPS:]
        _, states, _ = drive(rcfg, prep.H, prep.encoder, warm, states)
        t0 = time.perf_counter()
        drive(rcfg, prep.H, prep.encoder, timed, states)
        elapsed = time.perf_counter() - t0
    return BenchRecord(
        size=rcfg.n_neurons,
        n_instances=cfg.n_instances,
        n_steps=n_steps,
        init_time_s=prep.init_time_s,
        elapsed_s=elapsed,
        iter_time_s_per_1000=elapsed / n_steps * 1000.0,
    )
