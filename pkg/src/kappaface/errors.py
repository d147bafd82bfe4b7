"""Exception types raised across the package."""


class KappaFaceError(Exception):
    """Base class for every error raised by this package."""


class ZeroVectorError(KappaFaceError, ValueError):
    pass


class EmptySetError(KappaFaceError, ValueError):
    pass


class DimensionMismatchError(KappaFaceError, ValueError):
    pass


class InvalidDimensionError(KappaFaceError, ValueError):
    pass


class EmptyClassError(KappaFaceError, ValueError):
    pass


class PopulationExceedsMaxError(KappaFaceError, ValueError):
    pass


class NonUnitInputError(KappaFaceError, ValueError):
    pass


class ConfigMismatchError(KappaFaceError, ValueError):
    pass


class ConfigError(KappaFaceError, ValueError):
    """Invalid hyper-parameter or run configuration."""


class StaleCacheError(KappaFaceError, ValueError):
    pass


class SpecInvalidError(ConfigError):
    pass


class InsufficientPairsError(KappaFaceError, ValueError):
    pass


class DegeneratePairsError(KappaFaceError, ValueError):
    pass


class FormatError(KappaFaceError, OSError):
    """A binary or text file could not be decoded.

    ``offset`` is the byte offset at which decoding failed, when known.
    """

    def __init__(self, message, path=None, offset=None):
        parts = [message]
        if path is not None:
            parts.append(f"file={path}")
        if offset is not None:
            parts.append(f"offset={offset}")
        super().__init__(" ".join(parts))
        self.path = path
        self.offset = offset


class NumericalAbort(KappaFaceError, FloatingPointError):
    """Training produced a non-finite loss.

    Carries the last parameters that produced a finite epoch so callers can
    checkpoint them.
    """

    def __init__(self, message, records=None, last_good=None):
        super().__init__(message)
        self.records = records or []
        self.last_good = last_good
