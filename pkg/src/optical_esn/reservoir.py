"""Binary echo-state network driven through the simulated optics.

One update is ``x(t+1) = activate(|H [encode(u(t)) ; x(t)]|**2)``: the first
``input_width`` columns of ``H`` act as input weights and the remaining
``n_neurons`` columns as recurrent weights. States live in {0, 1} (mirrors are
on or off); readout features map them to {-1, +1} and append a bias column.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from optical_esn.encoding import ThermometerEncoder
from optical_esn.errors import ConfigError, DimensionError, MemoryBudgetError
from optical_esn.optics import (
    DEFAULT_MEMORY_BUDGET,
    CameraModel,
    ThresholdConfig,
    TransferMatrix,
    quantize_intensities,
    threshold_bits,
)
from optical_esn.seeding import DOMAIN_STATE, check_seed, generator, instance_seed

MAX_BATCH = 3000


@dataclass(frozen=True)
class ReservoirConfig:
    n_neurons: int
    input_width: int = 1000
    washout: int = 100
    seed: int = 0
    threshold: ThresholdConfig = field(default_factory=lambda: ThresholdConfig(mode="quantile"))
    camera: CameraModel | None = None
    batch_size: int = 300
    memory_budget: int = DEFAULT_MEMORY_BUDGET

    def __post_init__(self):
        if self.n_neurons < 1:
            raise ConfigError(f"n_neurons must be >= 1, got {self.n_neurons}")
        if self.input_width < 1:
            raise ConfigError(f"input_width must be >= 1, got {self.input_width}")
        if self.washout < 0:
            raise ConfigError(f"washout must be >= 0, got {self.washout}")
        if not 1 <= self.batch_size <= MAX_BATCH:
            raise ConfigError(f"batch_size must lie in [1, {MAX_BATCH}], got {self.batch_size}")
        if self.threshold.mode == "fixed_dn" and self.camera is None:
            raise ConfigError("fixed_dn threshold needs a camera model")
        check_seed(self.seed)

    @property
    def frame_width(self) -> int:
        return self.input_width + self.n_neurons


@dataclass(frozen=True, eq=False)
class ReservoirState:
    bits: np.ndarray
    step: int = 0


@dataclass(frozen=True, eq=False)
class StateHistory:
    """Readout design matrix and aligned targets.

    ``features`` has one row per post-washout step: ``n_instances`` blocks of
    ``n_neurons`` columns in {-1, +1}, then a constant bias column.
    ``activity`` is the fraction of active neurons after every driven step,
    washout included.
    """

    features: np.ndarray
    targets: np.ndarray
    activity: np.ndarray
    final_states: tuple[ReservoirState, ...]
    washout: int

    @property
    def final_state(self) -> ReservoirState:
        return self.final_states[0]

    def __len__(self):
        return self.features.shape[0]


def init_state(cfg: ReservoirConfig) -> ReservoirState:
    """Random initial state, i.i.d. fair bits from the config seed."""
    rng = generator(cfg.seed, DOMAIN_STATE)
    return ReservoirState(bits=rng.integers(0, 2, cfg.n_neurons, dtype=np.uint8), step=0)


def _check_shapes(cfg: ReservoirConfig, H: TransferMatrix, encoder: ThermometerEncoder):
    if encoder.width != cfg.input_width:
        raise DimensionError(f"encoder width {encoder.width} != input_width {cfg.input_width}")
    if H.cols != cfg.frame_width or H.rows != cfg.n_neurons:
        raise DimensionError(
            f"transfer matrix is {H.rows}x{H.cols}, reservoir needs {cfg.n_neurons}x{cfg.frame_width}"
        )


def _advance(cfg: ReservoirConfig, H: TransferMatrix, bits: np.ndarray, k: int):
    """One optics round for a ``(batch, N)`` block of states sharing input code ``k``.

    Returns ``(intensities, quantized, next_bits)``. The input contribution is a
    prefix-sum lookup, the recurrent one a single matrix product.
    """
    L = cfg.input_width
    fields = H.grid[:, L:] @ bits.T.astype(np.float64)
    fields += H.input_prefix(L)[:, k : k + 1]
    s = H.intensities_from_field(fields).T
    q = None
    if cfg.camera is not None:
        q = quantize_intensities(cfg.camera.gain, s, cfg.camera.saturation_dn)
    return s, q, threshold_bits(cfg.threshold, s, q)


def step(cfg: ReservoirConfig, H: TransferMatrix, encoder: ThermometerEncoder, state: ReservoirState, u: float) -> ReservoirState:
    _check_shapes(cfg, H, encoder)
    if state.bits.shape != (cfg.n_neurons,):
        raise DimensionError(f"state has shape {state.bits.shape}, expected ({cfg.n_neurons},)")
    _, _, nxt = _advance(cfg, H, state.bits[None, :], encoder.count(u))
    return ReservoirState(bits=nxt[0], step=state.step + 1)


def instance_config(cfg: ReservoirConfig, index: int) -> ReservoirConfig:
    """Config whose seed initializes instance ``index`` of a parallel run."""
    return replace(cfg, seed=instance_seed(cfg.seed, index))


def drive(cfg, H, encoder, inputs, states: np.ndarray, collect_speckle: bool = False):
    """Advance a ``(n_instances, N)`` block of states through ``inputs``.

    Returns the ``(T, n_instances, N)`` uint8 trajectory, the final states, and
    (if asked) the raw intensities of every step.
    """
    states = np.array(states, dtype=np.uint8, ndmin=2)
    n_inst = states.shape[0]
    T = len(inputs)
    traj = np.empty((T, n_inst, cfg.n_neurons), dtype=np.uint8)
    speckles = [] if collect_speckle else None
    codes = encoder.counts(inputs)
    for t in range(T):
        nxt = np.empty_like(states)
        for lo in range(0, n_inst, cfg.batch_size):
            hi = min(lo + cfg.batch_size, n_inst)
            s, _, nxt[lo:hi] = _advance(cfg, H, states[lo:hi], int(codes[t]))
            if collect_speckle:
                speckles.append(s)
        states = nxt
        traj[t] = states
    return traj, states, speckles


def _history(cfg, traj, targets, final_bits, start_step) -> StateHistory:
    T, n_inst, N = traj.shape
    kept = traj[cfg.washout:]
    rows = kept.shape[0]
    features = np.empty((rows, n_inst * N + 1))
    features[:, :-1] = kept.reshape(rows, n_inst * N)
    features[:, :-1] *= 2.0
    features[:, :-1] -= 1.0
    features[:, -1] = 1.0
    activity = traj.reshape(T, -1).mean(axis=1)
    finals = tuple(ReservoirState(bits=b.copy(), step=start_step + T) for b in final_bits)
    return StateHistory(
        features=features,
        targets=np.asarray(targets, dtype=np.float64)[cfg.washout:].copy(),
        activity=activity,
        final_states=finals,
        washout=cfg.washout,
    )


def _validate_run(cfg, H, encoder, inputs, targets, n_inst):
    _check_shapes(cfg, H, encoder)
    if len(inputs) != len(targets):
        raise DimensionError(f"{len(inputs)} inputs but {len(targets)} targets")
    if len(inputs) < cfg.washout + 1:
        raise ConfigError(f"need more than washout={cfg.washout} inputs, got {len(inputs)}")
    rows = len(inputs) - cfg.washout
    need = rows * (n_inst * cfg.n_neurons + 1) * 8 + len(inputs) * n_inst * cfg.n_neurons
    if need > cfg.memory_budget:
        raise MemoryBudgetError(
            f"state history for {n_inst} x {cfg.n_neurons} neurons needs {need / 2**20:.0f} MiB, "
            f"budget is {cfg.memory_budget / 2**20:.0f} MiB"
        )


def run(cfg, H, encoder, inputs, targets, initial_state: ReservoirState | None = None) -> StateHistory:
    """Drive one reservoir and collect its post-washout states."""
    _validate_run(cfg, H, encoder, inputs, targets, 1)
    state = initial_state if initial_state is not None else init_state(cfg)
    traj, final, _ = drive(cfg, H, encoder, inputs, state.bits[None, :])
    return _history(cfg, traj, targets, final, state.step)


def run_parallel(
    cfg,
    H,
    encoder,
    inputs,
    targets,
    n_instances: int,
    initial_states: Sequence[ReservoirState] | None = None,
) -> StateHistory:
    """Drive ``n_instances`` independent reservoirs on the same input.

    Instance ``k`` starts from ``init_state(instance_config(cfg, k))``; all
    instances share ``H`` and are advanced together, ``batch_size`` frames per
    optics call. Their state blocks are concatenated column-wise.
    """
    if n_instances < 1:
        raise ConfigError(f"n_instances must be >= 1, got {n_instances}")
    _validate_run(cfg, H, encoder, inputs, targets, n_instances)
    if initial_states is None:
        initial_states = [init_state(instance_config(cfg, k)) for k in range(n_instances)]
    if len(initial_states) != n_instances:
        raise DimensionError(f"{len(initial_states)} initial states for {n_instances} instances")
    start = initial_states[0].step
    traj, final, _ = drive(cfg, H, encoder, inputs, np.stack([s.bits for s in initial_states]))
    return _history(cfg, traj, targets, final, start)
