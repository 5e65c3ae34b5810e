"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not match what an operation expects."""


class ConfigError(ValueError):
    """Invalid construction parameters or experiment configuration."""


class UsageError(RuntimeError):
    """An API was called out of order or with mismatched state."""


class TrainingError(RuntimeError):
    """Non-finite values appeared during optimisation."""

    def __init__(self, message: str, layer: int | None = None):
        super().__init__(message)
        self.layer = layer


class EnvironmentFault(RuntimeError):
    """An environment received an invalid (e.g. non-finite) action."""


class MetricError(ValueError):
    """A signal cannot be analysed (too short, non-finite)."""


class ParseError(ValueError):
    """A log or schedule file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
