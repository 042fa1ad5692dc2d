"""Exception types shared across the package."""


class DualFluoroError(Exception):
    """Base class for all package errors."""


class DegenerateRay(DualFluoroError):
    """A point cannot be centrally projected onto an intensifier plane."""


class EmptyVolume(DualFluoroError):
    pass


class MissingLabel(DualFluoroError):
    pass


class OutOfRange(DualFluoroError):
    pass


class WrongCount(DualFluoroError):
    pass


class TooFewBeads(DualFluoroError):
    pass


class RankDeficient(DualFluoroError):
    pass


class NonConvergence(DualFluoroError):
    pass


class TooFewLandmarks(DualFluoroError):
    pass


class LengthMismatch(DualFluoroError):
    pass


class DimMismatch(DualFluoroError):
    pass


class ParseError(DualFluoroError):
    """An input file is missing or malformed."""


class ExtrapolationWarning(UserWarning):
    """Distortion correction was evaluated outside the calibrated region."""
