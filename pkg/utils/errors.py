"""Exception hierarchy shared by the library, the harness and the CLI."""
from typing import Any, Dict, Optional


class GraphPriorError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1

    def __init__(self, message: str = "", context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = dict(context or {})

    def with_context(self, **ctx: Any) -> "GraphPriorError":
        """Attach run context (grid value, replica, stage) and return self."""
        self.context.update(ctx)
        return self

    def __str__(self) -> str:
        if not self.context:
            return self.message
        ctx = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{self.message} [{ctx}]"


class ConfigurationError(GraphPriorError):
    """Invalid or unsupported configuration."""

    exit_code = 2


class RangeError(ConfigurationError):
    """A model parameter lies outside its admissible range."""


class UnsupportedError(ConfigurationError):
    """A requested combination is not implemented."""


class DomainError(GraphPriorError, ValueError):
    """An input lies outside the domain of an operation."""

    exit_code = 2


class DimensionError(GraphPriorError, ValueError):
    """Array shapes or counts do not match."""

    exit_code = 2


class TaskMismatchError(GraphPriorError, TypeError):
    """An operation was handed data for the wrong inference task."""

    exit_code = 2


class AlignmentError(GraphPriorError):
    """Discrete and continuum eigensystems were not aligned together."""

    exit_code = 2


class NumericalError(GraphPriorError):
    """A numerical computation failed."""

    exit_code = 3

    def __init__(self, message: str = "", iteration: Optional[int] = None, **kwargs: Any):
        super().__init__(message, **kwargs)
        self.iteration = iteration


class SolverError(NumericalError):
    """The eigensolver did not converge or violated its residual bound."""

    def __init__(self, message: str = "", residuals: Any = None, **kwargs: Any):
        super().__init__(message, **kwargs)
        self.residuals = residuals


class StructureError(NumericalError):
    """The similarity graph is disconnected."""


class ResourceError(GraphPriorError):
    """A request would exceed a configured resource budget."""

    exit_code = 4
