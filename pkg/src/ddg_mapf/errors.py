"""Exception types shared across the package."""


class MapfError(Exception):
    """Base class for all package errors."""


class MapFormatError(MapfError, ValueError):
    pass


class NonRectangular(MapFormatError):
    pass


class UnknownGlyph(MapFormatError):
    pass


class ArityMismatch(MapfError, ValueError):
    pass


class GoalBlocked(MapfError, ValueError):
    pass


class InstanceTooLarge(MapfError, ValueError):
    pass


class NonFiniteScore(MapfError, ArithmeticError):
    pass


class UnknownId(MapfError, ValueError):
    pass


class GenerationFailed(MapfError, RuntimeError):
    pass


class SpecInvalid(MapfError, ValueError):
    pass


class FormatError(MapfError, ValueError):
    """Corrupt or incompatible binary file (bad magic, version or checksum)."""
