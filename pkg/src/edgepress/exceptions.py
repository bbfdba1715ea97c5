"""Exception hierarchy shared across edgepress modules."""


class EdgepressError(Exception):
    """Base class for all edgepress errors."""


class ShapeError(EdgepressError, ValueError):
    pass


class ParameterError(EdgepressError, ValueError):
    pass


class ConfigError(EdgepressError, ValueError):
    pass


class DataError(EdgepressError, ValueError):
    pass


class LeakageError(DataError):
    """A source recording appears in more than one split."""


class MetricError(EdgepressError, ValueError):
    pass


class NumericError(EdgepressError, ArithmeticError):
    pass


class ParseError(EdgepressError, ValueError):
    """Malformed binary input. ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
