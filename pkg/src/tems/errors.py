"""Exception hierarchy shared across the package."""


class TemsError(ValueError):
    """Base class for all validation failures raised by ``tems``."""


class NotHermitianError(TemsError):
    pass


class NotUnitaryError(TemsError):
    pass


class DimensionError(TemsError):
    pass


class NotCompletelyPositiveError(TemsError):
    """Raised when a requested map has a negative Choi eigenvalue.

    The offending eigenvalue is kept on the instance so callers (e.g. the
    scan command) can record it instead of just the message.
    """

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class InstrumentError(TemsError):
    pass


class ConfigError(TemsError):
    """Invalid scenario/experiment configuration; ``path`` names the field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
