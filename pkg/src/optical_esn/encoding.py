"""Thermometer encoding of scalar inputs and DMD frame assembly."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from optical_esn.errors import ConfigError, DimensionError

CALIBRATION_MARGIN = 0.05


@dataclass(frozen=True)
class ThermometerEncoder:
    """Unary code: a scalar becomes ``k`` leading ones in ``width`` bits,
    with ``k`` proportional to its position inside ``[lo, hi]``."""

    width: int = 1000
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if int(self.width) != self.width or self.width < 1:
            raise ConfigError(f"width must be a positive integer, got {self.width}")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
            raise ConfigError(f"need finite lo < hi, got [{self.lo}, {self.hi}]")

    def count(self, u: float) -> int:
        """Number of leading ones used for ``u``."""
        if not math.isfinite(u):
            raise ConfigError(f"cannot encode non-finite value {u}")
        frac = min(max((u - self.lo) / (self.hi - self.lo), 0.0), 1.0)
        return int(round(self.width * frac))

    def counts(self, values) -> np.ndarray:
        return np.fromiter((self.count(float(u)) for u in values), dtype=np.int64)

    def decode(self, k: int) -> float:
        return self.lo + k / self.width * (self.hi - self.lo)


def calibrate(template: ThermometerEncoder | int, samples) -> ThermometerEncoder:
    """Fit ``lo``/``hi`` to the sample range plus a 5% margin on each side."""
    width = template if isinstance(template, int) else template.width
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ConfigError("calibration needs at least one sample")
    if not np.all(np.isfinite(x)):
        raise ConfigError("calibration samples must be finite")
    lo, hi = float(x.min()), float(x.max())
    margin = CALIBRATION_MARGIN * (hi - lo)
    lo, hi = lo - margin, hi + margin
    if hi == lo:
        hi = lo + 1.0
    return ThermometerEncoder(width=width, lo=lo, hi=hi)


def encode(encoder: ThermometerEncoder, u: float) -> np.ndarray:
    bits = np.zeros(encoder.width, dtype=np.uint8)
    bits[: encoder.count(u)] = 1
    return bits


@dataclass(frozen=True)
class DmdFrame:
    """Binary image shown on the modulator: encoded input followed by state."""

    bits: np.ndarray
    input_width: int
    state_width: int

    @property
    def layout(self) -> tuple[int, int]:
        return (self.input_width, self.state_width)

    def __len__(self):
        return self.input_width + self.state_width


def _as_bits(v, name: str) -> np.ndarray:
    a = np.asarray(v)
    if a.ndim != 1 or a.size < 1:
        raise DimensionError(f"{name} must be a nonempty 1-D vector")
    if not np.all((a == 0) | (a == 1)):
        raise ValueError(f"{name} must be binary")
    return a.astype(np.uint8, copy=False)


def assemble_frame(encoded_input, state) -> DmdFrame:
    x = _as_bits(encoded_input, "encoded_input")
    s = _as_bits(state, "state")
    bits = np.concatenate([x, s])
    bits.flags.writeable = False
    return DmdFrame(bits=bits, input_width=len(x), state_width=len(s))
