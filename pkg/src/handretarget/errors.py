"""Exception hierarchy shared by all stages."""


class RetargetError(Exception):
    """Base class for every error raised by this package."""


class NonPositiveDepth(RetargetError):
    pass


class OutOfBounds(RetargetError):
    pass


class FrameMismatch(RetargetError):
    pass


class MissingLandmarks(RetargetError):
    pass


class DegenerateGeometry(RetargetError):
    pass


class DegenerateVectors(RetargetError):
    pass


class LengthMismatch(RetargetError):
    pass


class NonFinite(RetargetError):
    pass


class ConfigError(RetargetError):
    pass


class FormatError(RetargetError):
    """Malformed input file. ``where`` carries a line or byte location when known."""

    def __init__(self, message, where=None):
        if where is not None:
            message = f"{where}: {message}"
        super().__init__(message)
        self.where = where


class AlignmentError(RetargetError):
    pass


class Unreachable(RetargetError):
    pass
