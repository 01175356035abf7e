"""Mackey-Glass series generation and one-step-ahead datasets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from optical_esn.errors import ConfigError, DivergenceError


@dataclass(frozen=True)
class MgParams:
    """Parameters of the discretized Mackey-Glass equation.

    ``du/dt = beta * u(t - tau) / (1 + u(t - tau)**n_exp) - gamma * u(t)``,
    integrated with explicit Euler steps of size ``h`` from a constant history
    ``init_value`` on ``t <= 0``.
    """

    beta: float = 0.2
    gamma: float = 0.1
    tau: float = 17.0
    n_exp: float = 10.0
    h: float = 1.0
    init_value: float = 1.2
    transient_steps: int = 1000

    def __post_init__(self):
        values = (self.beta, self.gamma, self.tau, self.n_exp, self.h, self.init_value)
        if not all(math.isfinite(v) for v in values):
            raise ConfigError("Mackey-Glass parameters must be finite")
        if self.h <= 0:
            raise ConfigError(f"h must be positive, got {self.h}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        ratio = self.tau / self.h
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ConfigError(f"tau/h must be a whole number of steps, got {ratio}")
        # beta == 0 is allowed: it switches the drive off (pure decay)
        if self.beta < 0 or self.gamma <= 0:
            raise ConfigError("beta must be >= 0 and gamma > 0")
        if self.n_exp < 1:
            raise ConfigError(f"n_exp must be >= 1, got {self.n_exp}")
        if int(self.transient_steps) != self.transient_steps or self.transient_steps < 0:
            raise ConfigError(f"transient_steps must be a nonnegative integer, got {self.transient_steps}")

    @property
    def delay_steps(self) -> int:
        return int(round(self.tau / self.h))


@dataclass(frozen=True)
class MgSeries:
    values: np.ndarray
    params: MgParams

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class SupervisedSeries:
    inputs: np.ndarray
    targets: np.ndarray

    def __len__(self):
        return len(self.inputs)


def euler_step(u: float, u_delayed: float, params: MgParams) -> float:
    drive = params.beta * u_delayed / (1.0 + u_delayed ** params.n_exp)
    return u + params.h * (drive - params.gamma * u)


def generate_mackey_glass(params: MgParams, length: int) -> MgSeries:
    """Integrate the Mackey-Glass equation and return ``length`` samples.

    Sample ``k`` of the result is ``u((params.transient_steps + k) * h)``;
    ``u(0)`` equals ``init_value``.
    """
    if length <= 0:
        raise ConfigError(f"length must be positive, got {length}")
    d = params.delay_steps
    total = params.transient_steps + length
    # buf[j] holds u((j - d) * h); the first d + 1 entries are the constant history
    buf = [float(params.init_value)] * (d + 1) + [0.0] * (total - 1)
    try:
        for t in range(d, d + total - 1):
            buf[t + 1] = euler_step(buf[t], buf[t - d], params)
            if not math.isfinite(buf[t + 1]):
                raise DivergenceError(f"non-finite value at step {t - d + 1}")
    except (OverflowError, ZeroDivisionError) as exc:
        raise DivergenceError(f"integration diverged: {exc}") from exc
    except TypeError as exc:
        # a negative delayed value raised to a fractional power went complex
        raise DivergenceError("delayed value became negative with a non-integer exponent") from exc
    values = np.asarray(buf[d + params.transient_steps:], dtype=np.float64)
    values.flags.writeable = False
    return MgSeries(values=values, params=params)


def make_supervised(series: MgSeries | np.ndarray) -> SupervisedSeries:
    """Pair each sample with its successor: ``targets[t] == inputs[t + 1]``."""
    values = np.asarray(getattr(series, "values", series), dtype=np.float64)
    if values.ndim != 1 or len(values) < 2:
        raise ConfigError("series must be one-dimensional with at least 2 samples")
    return SupervisedSeries(inputs=values[:-1].copy(), targets=values[1:].copy())


def write_series_csv(series: MgSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,u\n")
        for t, u in enumerate(series.values):
            fh.write(f"{t},{u:.12g}\n")
