"""Domain exceptions"""

from typing import Optional


class XvaError(Exception):
    """Base class for every error raised by the engine."""


class ValidationError(XvaError):
    """A domain object was constructed with invalid data."""


class CurveError(ValidationError):
    """Malformed rate curve or out-of-horizon evaluation."""


class ScenarioValidationError(ValidationError):
    """Scenario file violates the schema; carries the offending field path."""

    def __init__(self, field_path: str, message: str, line: Optional[int] = None):
        self.field_path = field_path
        self.line = line
        location = f"{field_path} (line {line})" if line is not None else field_path
        super().__init__(f"{location}: {message}")


class PricingSetupError(XvaError):
    """A pricer precondition does not hold for the given inputs."""


class UnsupportedPayoffError(XvaError):
    """Payoff outside the supported menu for the requested route."""


class RegressionError(XvaError):
    """Least-squares regression could not be performed."""


class ConvergenceError(XvaError):
    """Fixed-point iteration stopped without meeting its tolerance."""

    def __init__(self, iterations: int, residual: float, tolerance: float):
        self.iterations = iterations
        self.residual = residual
        self.tolerance = tolerance
        super().__init__(
            f"Picard iteration did not converge after {iterations} iterations "
            f"(residual {residual:.3e}, tolerance {tolerance:.3e})"
        )
