"""
Domain errors of the toolkit.

Everything derives from ValueError so callers that only know about bad
arguments keep working.
"""


class SQMCError(ValueError):
    """Base class of every toolkit error."""


# --- Point sets ---

class DimensionExceedsTableError(SQMCError):
    pass


class ZeroCountError(SQMCError):
    pass


class ModeMismatchError(SQMCError):
    pass


# --- Hilbert curve ---

class CoordinateOutOfRangeError(SQMCError):
    pass


class ResolutionOverflowError(SQMCError):
    pass


# --- Transforms ---

class DomainError(SQMCError):
    pass


# --- Resampling and filtering ---

class UnsortedInputError(SQMCError):
    pass


class WeightInvariantError(SQMCError):
    pass


class WeightCollapseError(SQMCError):
    """All weights vanished at time t."""

    def __init__(self, t: int, message: str = None):
        self.t = t
        super().__init__(message or f"all particle weights are zero at t={t}")


class MissingDensityError(SQMCError):
    pass


# --- Models and MCMC ---

class ModelParameterError(SQMCError):
    pass


class InvalidCovarianceError(SQMCError):
    pass


class PriorSupportError(SQMCError):
    pass


class ZeroVarianceChainError(SQMCError):
    pass


# --- Files ---

class SpecFileError(SQMCError):
    pass
