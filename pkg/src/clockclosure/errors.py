"""Exception hierarchy shared across the package.

The command line maps these onto process exit codes: configuration
problems exit 2, simulation failures exit 3, data problems exit 4.
"""


class ClockClosureError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ClockClosureError):
    """A scenario configuration is missing, malformed, or inconsistent."""


class DataError(ClockClosureError):
    """An input data file cannot be parsed or violates its schema."""


class SimulationError(ClockClosureError):
    """A simulation step failed (integrator, fit, or servo)."""


class StepSizeError(SimulationError):
    """Requested integrator step violates the stability bound."""


class FitError(SimulationError):
    """Lineshape fit did not converge or the design matrix is degenerate."""


class ServoLockError(SimulationError):
    """Servo estimate wandered beyond half a fringe from its starting point."""

    def __init__(self, message: str, cycle_index: int):
        super().__init__(message)
        self.cycle_index = cycle_index
