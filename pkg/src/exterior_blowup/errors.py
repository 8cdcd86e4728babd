"""Exception hierarchy shared by all modules."""


class BlowupLabError(Exception):
    """Base class for every error raised by the package."""


class InvalidProblem(BlowupLabError):
    pass


class NonPositiveSpacing(BlowupLabError):
    pass


class HorizonNegative(BlowupLabError):
    pass


class DimensionTooLow(BlowupLabError):
    pass


class SingularSystem(BlowupLabError):
    pass


class EmptyNearRegion(BlowupLabError):
    pass


class SignViolation(BlowupLabError):
    pass


class SupportViolation(BlowupLabError):
    pass


class TrivialData(BlowupLabError):
    pass


class CflViolation(BlowupLabError):
    pass


class SupportLeak(BlowupLabError):
    pass


class GridMismatch(BlowupLabError):
    pass


class UnknownInequality(BlowupLabError):
    pass


class InsufficientSamples(BlowupLabError):
    pass


class MissingPhi0(BlowupLabError):
    pass


class RegimeMismatch(BlowupLabError):
    pass


class CriticalOrSupercritical(BlowupLabError):
    pass


class InsufficientPoints(BlowupLabError):
    pass


class NoBlowupObserved(BlowupLabError):
    pass


class ConfigError(BlowupLabError):
    pass


class IoFailure(BlowupLabError):
    pass
