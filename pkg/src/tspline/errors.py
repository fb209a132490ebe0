"""Exception types shared across the package."""


class TsplineError(Exception):
    """Base class for all package errors."""


class InvalidInputError(TsplineError, ValueError):
    """Arguments violate a documented precondition."""


class InsufficientDataError(InvalidInputError):
    """Too few observations for the requested operation."""


class OutOfRangeError(InvalidInputError):
    """Evaluation time outside the knot support."""


class NumericalFailureError(TsplineError, RuntimeError):
    """A linear solve or factorization failed unexpectedly."""


class DegenerateFitError(TsplineError, RuntimeError):
    """The fit lost all usable observations (e.g. everything discarded)."""


class DegenerateSignalError(InvalidInputError):
    """Signal statistics are degenerate (e.g. zero rms velocity)."""


class ProjectionUnsuitableError(InvalidInputError):
    """Track geometry is outside the validity region of the projection."""
