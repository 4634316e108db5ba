"""Exception types shared across the package."""


class NetidentError(Exception):
    """Base class for all package errors."""


class ParameterError(NetidentError, ValueError):
    """Invalid argument or configuration value."""


class EdgeListParseError(NetidentError, ValueError):
    """Malformed edge-list file; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InsufficientDataError(NetidentError, ValueError):
    """Too few observations for the requested operation."""


class IntegrationError(NetidentError, RuntimeError):
    """Numerical integration produced a non-finite state; carries the step index."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class EvaluationError(NetidentError, RuntimeError):
    """Model right-hand side produced a non-finite value."""


class ConsensusError(NetidentError, RuntimeError):
    """Support-mask consensus failed (no usable cluster or empty mask)."""


class OptimizationError(NetidentError, RuntimeError):
    """Coefficient fitting failed to make progress after repeated restarts."""


class MetricError(NetidentError, ValueError):
    """Metric undefined for the given inputs."""


class ConfigError(NetidentError, ValueError):
    """Invalid experiment configuration; carries the offending field name."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(message)
        self.field = field
