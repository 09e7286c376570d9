"""Exception types raised across the package."""


class RWREError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RWREError, ValueError):
    """Invalid distribution, config field or argument combination."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class NoRootError(RWREError):
    """E_P rho^gamma - 1 has no sign change on the search bracket."""


class InsufficientContextError(RWREError, IndexError):
    """A reflection cutoff or walk left the materialized environment window."""

    def __init__(self, message, needed=None):
        self.needed = needed
        super().__init__(message)


class PartialResultError(RWREError):
    """Fewer ladder blocks were found than requested; carries what was found."""

    def __init__(self, message, partial=None):
        self.partial = partial
        super().__init__(message)


class RunawayBlockError(RWREError):
    """A single ladder block exceeded the hard length cap."""


class NumericalError(RWREError, ArithmeticError):
    """Quadrature or linear-solve failure, with diagnostics in ``info``."""

    def __init__(self, message, info=None):
        self.info = info or {}
        super().__init__(message)
