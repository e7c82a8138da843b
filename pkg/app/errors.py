"""
Error hierarchy
Every failure a service raises belongs to one family, and each family maps
to one CLI exit code
"""

from enum import IntEnum
from typing import Any, Dict, Optional


class ExitCode(IntEnum):
    OK = 0
    INPUT = 2
    CALIBRATION = 3
    VERIFICATION = 4
    INTERNAL = 5


class MixvolError(Exception):
    """Base class for all mixvol errors"""

    exit_code = ExitCode.INTERNAL

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.context = dict(context or {})


class InputError(MixvolError):
    """Raised when an input cannot be parsed or violates a precondition"""

    exit_code = ExitCode.INPUT


class CalibrationError(MixvolError):
    """Raised when market data admits no calibrated model"""

    exit_code = ExitCode.CALIBRATION


class VerificationError(MixvolError):
    """Raised when a simulated model fails its distributional checks"""

    exit_code = ExitCode.VERIFICATION


class DomainError(InputError):
    """Raised when an argument lies outside the domain of an operation"""
    pass


class PreconditionError(InputError):
    """Raised when the inputs of an operation do not meet its preconditions"""
    pass


class ArtifactError(InputError):
    """Raised when an artifact file is missing or malformed"""
    pass


class GridError(InputError):
    """Raised when a grid is too narrow or too coarse for the requested accuracy"""
    pass


class GridResolutionError(GridError):
    """Raised when a change of variables loses mass on a coarse grid"""
    pass


class TruncationError(GridError):
    """Raised when a transform integral is not negligible at the grid edges"""
    pass


class InvariantError(InputError):
    """Raised when constructed data breaks a structural invariant"""
    pass


class NonInvertibleCdfError(InputError):
    """Raised when a mixing CDF has a flat interior interval"""
    pass


class InconsistentTransformError(CalibrationError):
    """Raised when a transform cannot come from any lognormal mixture"""
    pass


class InversionError(CalibrationError):
    """Raised when a numerical Laplace inversion is unusable"""
    pass


class RepricingError(CalibrationError):
    """Raised when a calibrated model misses the densities it was calibrated to"""
    pass


class CalendarArbitrageError(CalibrationError):
    """Raised when quantile total variance decreases across maturities beyond repair"""
    pass


class InfeasibleCouplingError(CalibrationError):
    """Raised when three marginals admit no joint law on the grid"""
    pass


class PosteriorError(InputError):
    """Raised when an observation has zero likelihood under every component"""
    pass


def exit_code_for(error: BaseException) -> ExitCode:
    """Exit code for an exception raised while running a command"""
    if isinstance(error, MixvolError):
        return error.exit_code
    return ExitCode.INTERNAL
