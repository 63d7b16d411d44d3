"""Exception types shared across the package."""


class NvsimError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(NvsimError, ValueError):
    """A physical parameter is out of its allowed range."""


class ContractViolationError(NvsimError, ValueError):
    """An input violates a structural precondition (e.g. non-Hermitian matrix)."""


class InvalidModelError(NvsimError, ValueError):
    """A level model cannot be assembled (bad rates, non-normalizable branching)."""


class InvalidDriveError(NvsimError, ValueError):
    """A drive specification is inconsistent (unknown levels, frame conflict)."""


class StiffnessError(NvsimError, RuntimeError):
    """The integrator could not proceed (step underflow or trace drift)."""


class NonUniqueSteadyStateError(NvsimError, RuntimeError):
    """The generator's null space has dimension != 1."""


class InvalidProtocolError(NvsimError, ValueError):
    """An experiment protocol is self-inconsistent."""


class InvalidBinningError(NvsimError, ValueError):
    """Histogram/timing bin specification is unusable."""


class InvalidCalibrationError(NvsimError, ValueError):
    """Readout calibration levels are degenerate or inverted."""


class InvalidGeometryError(NvsimError, ValueError):
    """Optical geometry parameters are outside their physical domain."""


class InsufficientSpanError(NvsimError, ValueError):
    """Data does not span enough of the feature being fitted."""


class InvalidDataError(NvsimError, ValueError):
    """Input arrays are malformed (too short, non-monotone axis, NaNs)."""


class NoSignalError(NvsimError, RuntimeError):
    """No scan row produced a usable fit."""


class ConfigError(NvsimError, ValueError):
    """A run configuration failed validation."""
