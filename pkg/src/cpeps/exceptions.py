"""Exception hierarchy shared by every module of the package."""


class CpepsError(Exception):
    """Base class for all package errors."""


class ConfigError(CpepsError, ValueError):
    """A configuration value violates a declared invariant.

    ``path`` names the offending field (dotted, e.g. ``lattice.epsilon``).
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class ResourceError(CpepsError, MemoryError):
    """A requested construction does not fit into the configured memory budget."""

    def __init__(self, message, required_bytes=None, budget_bytes=None, suggestion=None):
        self.required_bytes = required_bytes
        self.budget_bytes = budget_bytes
        self.suggestion = suggestion
        if suggestion:
            message = f"{message} ({suggestion})"
        super().__init__(message)


class SingularityError(CpepsError, ValueError):
    """The metric continuation was evaluated too close to theta = pi/4."""


class ConsistencyError(CpepsError, AssertionError):
    """Two independent evaluation routes disagree beyond tolerance."""
