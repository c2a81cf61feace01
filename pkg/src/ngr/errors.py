"""Exception types shared across the package."""


class NgrError(Exception):
    """Base class for all package errors."""


class FormatError(NgrError):
    """A file on disk is malformed, truncated, or of an unsupported kind."""


class ConfigError(NgrError):
    """A configuration file or value violates its schema."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(NgrError):
    """A solve produced a non-finite value."""

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        super().__init__(message)
