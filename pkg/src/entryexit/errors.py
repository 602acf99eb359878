"""Exception hierarchy shared by the solvers, the verification engines and the CLI."""


class EntryExitError(Exception):
    """Base class for every error raised by this package."""


class DomainError(EntryExitError, ValueError):
    """A parameter or an evaluation point lies outside its admissible range."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class PreconditionError(EntryExitError):
    """An operation was called in a parameter region it does not cover (e.g. r <= mu)."""


class MissingTrigger(EntryExitError):
    """Regime classification needs the exit trigger but none was supplied."""


class ConvergenceError(EntryExitError):
    """An iterative solver failed; carries whatever diagnostics it had."""

    def __init__(self, message: str, **diagnostics):
        self.diagnostics = diagnostics
        if diagnostics:
            extra = ", ".join(f"{k}={v!r}" for k, v in diagnostics.items())
            message = f"{message} ({extra})"
        super().__init__(message)


class ConfigError(EntryExitError, ValueError):
    """Invalid simulation, grid or run configuration."""
