"""Exception hierarchy shared by every module."""


class PTEError(Exception):
    pass


class InvalidArgument(PTEError, ValueError):
    pass


class ShapeError(PTEError, ValueError):
    pass


class OrderingError(PTEError, ValueError):
    pass


class EmptyColumnError(PTEError, LookupError):
    """No retained chunk covers the requested target time."""


class DecodeError(PTEError, ValueError):
    pass


class PlanningError(PTEError, RuntimeError):
    pass


class PlantFault(PTEError, RuntimeError):
    pass


class ParseError(PTEError, ValueError):
    """Malformed log or wire record. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ProtocolError(PTEError):
    pass


class ConfigError(PTEError, ValueError):
    pass
