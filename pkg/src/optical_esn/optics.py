"""Simulated scattering medium and camera.

The transfer matrix entries are circular complex Gaussians stored on a fixed
integer grid (``entries == grid * scale``). Because the DMD frames are binary,
every field ``H @ d`` is then a sum of integers that float64 represents
exactly, so speckle intensities do not depend on BLAS blocking, thread count
or whether frames are multiplied one at a time or as a batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Literal, Sequence

import numpy as np

from optical_esn.encoding import DmdFrame
from optical_esn.errors import ConfigError, DimensionError, MemoryBudgetError
from optical_esn.seeding import DOMAIN_MATRIX, check_seed, generator

GRID_BITS = 20
# |grid| <= 2**24 after clipping; sums over up to 2**28 columns stay below 2**53
GRID_CLIP = 16.0
MAX_EXACT_COLUMNS = 1 << 28
DEFAULT_MEMORY_BUDGET = 2 << 30  # bytes
SATURATION_DN = 255


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    """``rows x cols`` complex Gaussian matrix; per-component variance ``1/(2*cols)``.

    ``grid`` stacks real parts (first ``rows`` rows) over imaginary parts.
    """

    rows: int
    cols: int
    seed: int
    grid: np.ndarray = field(repr=False)
    scale: float = field(repr=False)

    @property
    def entries(self) -> np.ndarray:
        g = self.grid
        return (g[: self.rows] + 1j * g[self.rows:]) * self.scale

    @property
    def nbytes(self) -> int:
        return self.grid.nbytes

    def scaled(self, c: float) -> "TransferMatrix":
        """The same matrix multiplied by ``c > 0``."""
        if not c > 0:
            raise ValueError("scale factor must be positive")
        return replace(self, scale=self.scale * c)

    def column_block(self, start: int, stop: int) -> np.ndarray:
        """Complex entries of columns ``start:stop``."""
        g = self.grid[:, start:stop]
        return (g[: self.rows] + 1j * g[self.rows:]) * self.scale

    def input_prefix(self, width: int) -> np.ndarray:
        """Cumulative sums of the first ``width`` grid columns, shape (2*rows, width+1).

        Column ``k`` is the field contributed by a thermometer code with ``k``
        leading ones. Exact, like every grid sum.
        """
        cache = self.__dict__.setdefault("_prefix_cache", {})
        if width not in cache:
            table = np.zeros((2 * self.rows, width + 1))
            np.cumsum(self.grid[:, :width], axis=1, out=table[:, 1:])
            table.flags.writeable = False
            cache.clear()
            cache[width] = table
        return cache[width]

    def intensities_from_field(self, fields: np.ndarray) -> np.ndarray:
        re, im = fields[: self.rows], fields[self.rows:]
        return (re * re + im * im) * (self.scale * self.scale)


def _gaussian_grid(rng: np.random.Generator, shape) -> np.ndarray:
    g = rng.standard_normal(shape)
    np.multiply(g, float(1 << GRID_BITS), out=g)
    np.rint(g, out=g)
    limit = GRID_CLIP * (1 << GRID_BITS)
    np.clip(g, -limit, limit, out=g)
    return g


def build_transfer_matrix(n: int, m: int, seed: int, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> TransferMatrix:
    """Draw the ``n x m`` transfer matrix for ``seed``.

    Raises :class:`MemoryBudgetError` instead of allocating more than
    ``memory_budget`` bytes.
    """
    if n < 1 or m < 1:
        raise ConfigError(f"matrix dimensions must be >= 1, got {n}x{m}")
    if m > MAX_EXACT_COLUMNS:
        raise ConfigError(f"at most {MAX_EXACT_COLUMNS} columns are supported")
    need = 2 * n * m * 8
    if need > memory_budget:
        raise MemoryBudgetError(
            f"{n}x{m} transfer matrix needs {need / 2**20:.0f} MiB, budget is {memory_budget / 2**20:.0f} MiB"
        )
    grid = _gaussian_grid(generator(check_seed(seed), DOMAIN_MATRIX), (2 * n, m))
    grid.flags.writeable = False
    scale = 2.0 ** -GRID_BITS / math.sqrt(2.0 * m)
    return TransferMatrix(rows=n, cols=m, seed=seed, grid=grid, scale=scale)


@dataclass(frozen=True, eq=False)
class SpeckleFrame:
    intensities: np.ndarray
    quantized: np.ndarray | None = None

    def __len__(self):
        return len(self.intensities)


@dataclass(frozen=True)
class CameraModel:
    gain: float = 1.0
    saturation_dn: int = SATURATION_DN
    target_mean_dn: float = 48.0

    def __post_init__(self):
        if not (math.isfinite(self.gain) and self.gain > 0):
            raise ConfigError(f"gain must be positive, got {self.gain}")
        if not 0 < self.target_mean_dn <= self.saturation_dn:
            raise ConfigError(f"target_mean_dn must lie in (0, {self.saturation_dn}]")


@dataclass(frozen=True)
class ThresholdConfig:
    """Neuron activation rule.

    ``fixed_dn``: active iff the 8-bit camera value exceeds ``fixed_dn``.
    ``quantile``: active iff the raw intensity exceeds this frame's
    ``quantile`` level.
    """

    mode: Literal["fixed_dn", "quantile"] = "fixed_dn"
    fixed_dn: int = 24
    quantile: float = 0.5

    def __post_init__(self):
        if self.mode not in ("fixed_dn", "quantile"):
            raise ConfigError(f"unknown threshold mode {self.mode!r}")
        if int(self.fixed_dn) != self.fixed_dn or not 0 <= self.fixed_dn <= SATURATION_DN:
            raise ConfigError(f"fixed_dn must be an integer in [0, 255], got {self.fixed_dn}")
        if not 0 < self.quantile < 1:
            raise ConfigError(f"quantile must lie in (0, 1), got {self.quantile}")


def _frame_bits(H: TransferMatrix, d, index: int | None = None) -> np.ndarray:
    bits = d.bits if isinstance(d, DmdFrame) else np.asarray(d)
    if bits.ndim != 1 or bits.shape[0] != H.cols:
        where = "" if index is None else f" at batch index {index}"
        raise DimensionError(f"frame{where} has length {bits.shape}, transfer matrix has {H.cols} columns")
    return bits


def compute_speckle(H: TransferMatrix, d: DmdFrame | np.ndarray) -> SpeckleFrame:
    """Intensity ``|H d|**2`` on each camera pixel."""
    bits = _frame_bits(H, d).astype(np.float64)
    return SpeckleFrame(H.intensities_from_field(H.grid @ bits))


def speckle_matrix(H: TransferMatrix, frames: np.ndarray) -> np.ndarray:
    """Intensities for a ``(batch, cols)`` binary array, returned as ``(batch, rows)``."""
    fields = H.grid @ frames.T.astype(np.float64)
    return H.intensities_from_field(fields).T


def compute_speckle_batch(H: TransferMatrix, frames: Sequence[DmdFrame | np.ndarray]) -> list[SpeckleFrame]:
    if len(frames) == 0:
        return []
    stacked = np.stack([_frame_bits(H, d, i) for i, d in enumerate(frames)])
    return [SpeckleFrame(row) for row in speckle_matrix(H, stacked)]


def quantize_intensities(gain: float, s: np.ndarray, saturation_dn: int = SATURATION_DN) -> np.ndarray:
    dn = np.floor(gain * s)
    np.minimum(dn, saturation_dn, out=dn)
    return dn.astype(np.uint8)


def quantize(camera: CameraModel, s: SpeckleFrame) -> SpeckleFrame:
    """8-bit camera readout ``min(255, floor(gain * s))``; intensities are kept."""
    return SpeckleFrame(s.intensities, quantize_intensities(camera.gain, s.intensities, camera.saturation_dn))


def calibrate_gain(template: CameraModel, calibration_speckles: Sequence[SpeckleFrame | np.ndarray]) -> CameraModel:
    """Pick the gain that maps the mean calibration intensity to ``target_mean_dn``."""
    if len(calibration_speckles) == 0:
        raise ConfigError("calibration set is empty")
    total, count = 0.0, 0
    for s in calibration_speckles:
        x = np.asarray(getattr(s, "intensities", s), dtype=np.float64)
        total += float(x.sum())
        count += x.size
    mean = total / count if count else 0.0
    if not mean > 0:
        raise ConfigError("calibration intensities have zero mean")
    return replace(template, gain=template.target_mean_dn / mean)


def threshold_bits(cfg: ThresholdConfig, intensities: np.ndarray, quantized: np.ndarray | None) -> np.ndarray:
    """Activation on ``(..., N)`` arrays; the quantile is taken along the last axis."""
    if cfg.mode == "fixed_dn":
        if quantized is None:
            raise ConfigError("fixed_dn activation needs a quantized camera frame")
        return (quantized > cfg.fixed_dn).astype(np.uint8)
    # order-statistic quantile: the threshold is one of the intensities, so ties stay inactive
    q = np.quantile(intensities, cfg.quantile, axis=-1, method="inverted_cdf", keepdims=True)
    return (intensities > q).astype(np.uint8)


def activate(cfg: ThresholdConfig, s: SpeckleFrame) -> np.ndarray:
    return threshold_bits(cfg, s.intensities, s.quantized)
