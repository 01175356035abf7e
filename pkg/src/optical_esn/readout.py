"""Ridge-regression readout and R^2 scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from threadpoolctl import threadpool_limits

from optical_esn.errors import ConfigError, DimensionError, SingularSystemError


@dataclass(frozen=True)
class RidgeConfig:
    alpha: float = 30.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ConfigError(f"alpha must be finite and >= 0, got {self.alpha}")


@dataclass(frozen=True, eq=False)
class ReadoutModel:
    weights: np.ndarray
    alpha: float

    @property
    def width(self) -> int:
        return self.weights.shape[0]

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "width": self.width, "weights": self.weights.tolist()}


def _design(history) -> tuple[np.ndarray, np.ndarray | None]:
    if hasattr(history, "features"):
        return history.features, history.targets
    return np.asarray(history, dtype=np.float64), None


def fit(cfg: RidgeConfig, history, targets=None) -> ReadoutModel:
    """Minimize ``||y - X w||^2 + alpha ||w||^2``, bias column included in the penalty.

    ``history`` is a :class:`StateHistory` or a plain design matrix (then pass
    ``targets``). Solves the normal equations by Cholesky; an SVD solve takes
    over if the factorization fails with ``alpha > 0``. BLAS runs on one
    thread here so the weights do not depend on the thread count.
    """
    X, y = _design(history)
    if targets is not None:
        y = targets
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or y.shape != (X.shape[0],):
        raise DimensionError(f"design {X.shape} and targets {y.shape} do not match")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ConfigError("design matrix and targets must be finite")
    with threadpool_limits(limits=1, user_api="blas"):
        w = _solve(X, y, cfg.alpha)
    if not np.all(np.isfinite(w)):
        raise SingularSystemError("readout weights are not finite; the system is ill-conditioned")
    return ReadoutModel(weights=w, alpha=cfg.alpha)


def _solve(X, y, alpha):
    gram = X.T @ X
    gram[np.diag_indices_from(gram)] += alpha
    rhs = X.T @ y
    try:
        factor = linalg.cho_factor(gram, lower=False, check_finite=False)
        return linalg.cho_solve(factor, rhs, check_finite=False)
    except linalg.LinAlgError as exc:
        if alpha == 0:
            raise SingularSystemError("normal equations are singular with alpha=0; use alpha > 0") from exc
        U, sv, Vt = np.linalg.svd(X, full_matrices=False)
        return Vt.T @ (sv / (sv * sv + alpha) * (U.T @ y))


def predict(model: ReadoutModel, history) -> np.ndarray:
    X, _ = _design(history)
    if X.ndim != 2 or X.shape[1] != model.width:
        raise DimensionError(f"features have width {X.shape[-1]}, model expects {model.width}")
    with threadpool_limits(limits=1, user_api="blas"):
        return X @ model.weights


def score(predictions, targets) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1 or y.size == 0:
        raise DimensionError(f"predictions {p.shape} and targets {y.shape} must be equal nonzero-length vectors")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise ConfigError("targets have zero variance; R^2 is undefined")
    return 1.0 - float(np.sum((y - p) ** 2)) / ss_tot
