"""Exception types raised across the package."""


class CamotError(Exception):
    """Base class for all package errors."""


class InvalidInputError(CamotError, ValueError):
    pass


class DegenerateGeometryError(CamotError):
    """A detection cannot be lifted (zero-height box, ray at the horizon...)."""


class InsufficientPointsError(CamotError):
    """Fewer than three usable points for a plane fit."""


class DegenerateFitError(CamotError):
    pass


class NumericalFailureError(CamotError):
    pass


class ParseError(CamotError, ValueError):
    def __init__(self, path, line_no, message):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")
