"""Exception hierarchy shared across the package."""


class DqipError(Exception):
    """Base class for all package errors."""


class ValidationError(DqipError):
    """A value failed a mathematical validity check (non-unitary, non-PSD, ...)."""


class LayoutError(DqipError):
    """Qubit targets are out of range, duplicated, or refer to unknown registers."""


class CapacityError(DqipError):
    """A requested allocation or enumeration exceeds the configured budget."""

    def __init__(self, message: str, requested: int | None = None, limit: int | None = None):
        super().__init__(message)
        self.requested = requested
        self.limit = limit


class ProtocolError(DqipError):
    """A turn script is malformed or an actor touched a register it does not own."""


class ShapeError(DqipError):
    """A transform received a protocol whose turn count has the wrong shape."""


class ConfigError(DqipError):
    """An experiment configuration failed schema validation."""

    def __init__(self, message: str, fields: list[str] | None = None):
        super().__init__(message)
        self.fields = fields or []
