"""Exception types raised by the boise package."""


class BoiseError(Exception):
    """Base class for all package errors."""


class ParseError(BoiseError, ValueError):
    """Malformed CSV input."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class DegenerateDataError(BoiseError, ValueError):
    """Data too constant or too sparse for the requested computation."""


class UndefinedMetricError(BoiseError, ValueError):
    """A ranking metric is undefined for the given truth vector."""


class ZeroMassError(BoiseError, ArithmeticError):
    """Intermediate data with zero estimated predictive mass."""


class GuardError(BoiseError, ValueError):
    """Instance too large for exhaustive enumeration."""
