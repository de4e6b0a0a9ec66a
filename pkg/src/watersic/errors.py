"""Exception hierarchy shared by all watersic modules."""


class WaterSICError(ValueError):
    """Base class for every error raised by this package."""


class DimensionMismatch(WaterSICError):
    pass


class NotPositiveDefinite(WaterSICError):
    """Cholesky pivot non-positive or too small; increase damping or re-run dead-feature detection."""


class AllDead(WaterSICError):
    pass


class NonPositiveScale(WaterSICError):
    pass


class CodeOverflow(WaterSICError):
    pass


class SingularSystem(WaterSICError):
    pass


class DegenerateRow(WaterSICError):
    pass


class InvalidBracket(WaterSICError):
    pass


class EmptySamples(WaterSICError):
    pass


class EmptyHistogram(WaterSICError):
    pass


class UnknownSymbol(WaterSICError):
    pass


class TruncatedStream(WaterSICError):
    pass


class InvalidCode(WaterSICError):
    pass


class BracketMiss(WaterSICError):
    pass


class ExhaustedBudget(WaterSICError):
    pass


class DistortionOutOfRange(WaterSICError):
    pass


class PreconditionViolated(WaterSICError):
    pass


class BadMagic(WaterSICError):
    pass


class VersionMismatch(WaterSICError):
    pass


class ChecksumFailure(WaterSICError):
    pass
