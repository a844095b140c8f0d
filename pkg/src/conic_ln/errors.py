"""Exception hierarchy. Every error carries the CLI exit code it maps to."""

from typing import Any, List, Optional


class ConicLNError(Exception):
    exit_code = 1


class ConfigError(ConicLNError, ValueError):
    """Raised when a run configuration cannot be parsed or validated."""

    exit_code = 2

    def __init__(self, message: str, key_path: str = ""):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}" if key_path else message)


class ParameterError(ConicLNError, ValueError):
    exit_code = 3


class ShapeError(ParameterError):
    pass


class ResolutionError(ParameterError):
    pass


class PreconditionError(ParameterError):
    pass


class NeedsLargerCutoffError(PreconditionError):
    pass


class RateError(PreconditionError):
    pass


class FredholmObstructionError(PreconditionError):
    """The shifted angular problem is resonant and the data is not orthogonal."""

    def __init__(self, message: str, obstruction: float = 0.0):
        self.obstruction = obstruction
        super().__init__(message)


class DiagnosticError(ConicLNError):
    exit_code = 3


class DomainError(ConicLNError):
    """A fractional power was requested of a nonpositive value."""

    exit_code = 4

    def __init__(self, message: str, node: Optional[Any] = None):
        self.node = node
        super().__init__(message)


class ConvergenceError(ConicLNError):
    """
    An iterative solver failed to converge.

    Attributes:
        last_iterate: The final iterate reached before giving up.
        history: Residual (or correction) norms per iteration.
    """

    exit_code = 4

    def __init__(
        self,
        message: str,
        last_iterate: Optional[Any] = None,
        history: Optional[List[float]] = None,
    ):
        self.last_iterate = last_iterate
        self.history = list(history or [])
        super().__init__(message)


class NonContractionError(ConvergenceError):
    pass


class NumericError(ConicLNError):
    exit_code = 4


class OracleError(ConicLNError):
    exit_code = 5


class StageError(ConicLNError):
    """Wraps an error raised inside a pipeline stage, keeping its exit code."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
        super().__init__(f"[{stage}] {cause}")


class CutoffError(PreconditionError):
    """Expansion bookkeeping grew past its term budget."""
