"""Exception types shared across the package."""


class SlagError(Exception):
    """Base class for all package errors."""


class InputError(SlagError, ValueError):
    """An argument violates a documented precondition."""


class ZeroEncountered(SlagError):
    """A path or integration step ran into a zero of the differential."""

    def __init__(self, message, location=None, zero=None):
        super().__init__(message)
        self.location = location
        self.zero = zero


class NonConvergence(SlagError):
    """An iterative procedure failed to reach its tolerance.

    ``best`` carries whatever partial result was available, ``residuals``
    any diagnostic numbers the caller may want to report.
    """

    def __init__(self, message, best=None, residuals=None):
        super().__init__(message)
        self.best = best
        self.residuals = residuals


class ConfigError(SlagError):
    """A scenario configuration could not be parsed or validated."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset
