"""NV-center optical dynamics: level structure, driven-dissipative evolution,
measurement protocol simulators, photonics calculators, and fitting helpers.
"""

from .dynamics import (
    Drive,
    Envelope,
    NVModel,
    build_nv_model,
    evolve,
    lambda_drive,
    liouvillian,
    microwave_drive,
    optical_drive,
    steady_state,
)
from .errors import (
    ConfigError,
    ContractViolationError,
    InsufficientSpanError,
    InvalidBinningError,
    InvalidCalibrationError,
    InvalidDataError,
    InvalidDriveError,
    InvalidGeometryError,
    InvalidModelError,
    InvalidParameterError,
    InvalidProtocolError,
    NonUniqueSteadyStateError,
    NoSignalError,
    NvsimError,
    StiffnessError,
)
from .levels import (
    ExcitedStateParams,
    GroundParams,
    build_excited_hamiltonian,
    eigensystem,
    ground_levels,
    solve_levels,
)
from .records import DetectionEvent, DetectionRecord, Spectrum

__version__ = "0.1.0"

__all__ = [
    "Drive",
    "Envelope",
    "NVModel",
    "build_nv_model",
    "evolve",
    "lambda_drive",
    "liouvillian",
    "microwave_drive",
    "optical_drive",
    "steady_state",
    "ExcitedStateParams",
    "GroundParams",
    "build_excited_hamiltonian",
    "eigensystem",
    "ground_levels",
    "solve_levels",
    "DetectionEvent",
    "DetectionRecord",
    "Spectrum",
    "ConfigError",
    "ContractViolationError",
    "InsufficientSpanError",
    "InvalidBinningError",
    "InvalidCalibrationError",
    "InvalidDataError",
    "InvalidDriveError",
    "InvalidGeometryError",
    "InvalidModelError",
    "InvalidParameterError",
    "InvalidProtocolError",
    "NonUniqueSteadyStateError",
    "NoSignalError",
    "NvsimError",
    "StiffnessError",
    "__version__",
]
