"""Binary echo-state networks on a simulated scattering-medium reservoir."""

__version__ = "0.1.0"

from optical_esn.encoding import DmdFrame, ThermometerEncoder, assemble_frame, calibrate, encode
from optical_esn.errors import (
    ConfigError,
    DimensionError,
    DivergenceError,
    MemoryBudgetError,
    OpticalESNError,
    SingularSystemError,
)
from optical_esn.optics import (
    CameraModel,
    SpeckleFrame,
    ThresholdConfig,
    TransferMatrix,
    activate,
    build_transfer_matrix,
    calibrate_gain,
    compute_speckle,
    compute_speckle_batch,
    quantize,
)
from optical_esn.readout import ReadoutModel, RidgeConfig, fit, predict, score
from optical_esn.reservoir import (
    ReservoirConfig,
    ReservoirState,
    StateHistory,
    init_state,
    run,
    run_parallel,
    step,
)
from optical_esn.timeseries import (
    MgParams,
    MgSeries,
    SupervisedSeries,
    generate_mackey_glass,
    make_supervised,
)

__all__ = [
    "CameraModel",
    "ConfigError",
    "DimensionError",
    "DivergenceError",
    "DmdFrame",
    "MemoryBudgetError",
    "MgParams",
    "MgSeries",
    "OpticalESNError",
    "ReadoutModel",
    "ReservoirConfig",
    "ReservoirState",
    "RidgeConfig",
    "SingularSystemError",
    "SpeckleFrame",
    "StateHistory",
    "SupervisedSeries",
    "ThermometerEncoder",
    "ThresholdConfig",
    "TransferMatrix",
    "activate",
    "assemble_frame",
    "build_transfer_matrix",
    "calibrate",
    "calibrate_gain",
    "compute_speckle",
    "compute_speckle_batch",
    "encode",
    "fit",
    "generate_mackey_glass",
    "init_state",
    "make_supervised",
    "predict",
    "quantize",
    "run",
    "run_parallel",
    "score",
    "step",
]
