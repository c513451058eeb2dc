"""Exception and warning types shared across the package.

Grouped by how the CLI maps them to exit codes: configuration problems,
numerical/conditioning failures, and physics/guard violations.
"""


class MagsimError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MagsimError, ValueError):
    """Bad configuration file, unknown key, or malformed override."""


# -- guard / input violations ------------------------------------------------

class InvalidDimensionError(MagsimError, ValueError):
    """Operator or layout dimension outside the supported range."""


class DispersiveRegimeError(MagsimError, ValueError):
    """Detunings too small relative to bare couplings for the dispersive model."""


class NoSolutionError(MagsimError, ValueError):
    """Requested target is outside the reachable branch of an inversion."""


class DegenerateInputError(MagsimError, ValueError):
    """Inputs degenerate to the point where the result is undefined."""


class InvalidStateError(MagsimError, ValueError):
    """Density matrix or state vector violates its invariants."""


class InvalidObservableError(MagsimError, ValueError):
    """Observable fails the checks required for a real expectation value."""


class InvalidSelectorError(MagsimError, ValueError):
    """Unknown subsystem or channel selector."""


class ScheduleError(MagsimError, ValueError):
    """Pulse schedule violates channel-overlap or readout-ordering rules."""


# -- numerical failures ------------------------------------------------------

class IntegratorAccuracyError(MagsimError, RuntimeError):
    """Trace drift or positivity loss beyond tolerance; reduce the step."""


class ConditioningError(MagsimError, RuntimeError):
    """Linear system too ill-conditioned to invert meaningfully."""


class InformativenessError(MagsimError, RuntimeError):
    """Measurement set does not determine the requested reconstruction."""


class CalibrationError(MagsimError, RuntimeError):
    """A calibration search failed to converge to the requested tolerance."""


class ResolutionError(MagsimError, ValueError):
    """Scan grid too coarse for the analysis that consumes it."""


class AssemblyError(MagsimError, RuntimeError):
    """Internal consistency check failed while building an operator."""


class TruncationWarning(UserWarning):
    """Hilbert-space truncation is marginal for the requested operation."""


#: Errors that indicate a guard/physics violation (CLI exit code 4).
GUARD_ERRORS = (
    InvalidDimensionError,
    DispersiveRegimeError,
    NoSolutionError,
    DegenerateInputError,
    InvalidStateError,
    InvalidObservableError,
    InvalidSelectorError,
    ScheduleError,
)

#: Errors that indicate a numerical failure (CLI exit code 3).
NUMERICAL_ERRORS = (
    IntegratorAccuracyError,
    ConditioningError,
    InformativenessError,
    CalibrationError,
    ResolutionError,
    AssemblyError,
)
