"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration value (simulator, network, agent or experiment)."""


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class SignalInProgressError(RuntimeError):
    """A signal command arrived while a yellow transition was still running."""


class FlowParseError(ValueError):
    """Malformed arrivals file. Carries the offending 1-based line number."""

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line
