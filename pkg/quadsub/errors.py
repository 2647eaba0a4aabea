"""
Exception hierarchy for quadsub.

Library code raises these; only the command-line front end turns them into
exit codes (see ``QuadSubError.exit_code``).
"""
from typing import Any, Optional


class QuadSubError(Exception):
    """Base class for every error raised by the toolkit."""

    exit_code = 1

    def __init__(self, message: str, report: Optional[Any] = None) -> None:
        super().__init__(message)
        # Partial result for the caller to emit before exiting.
        self.report = report


class SymbolError(QuadSubError, ValueError):
    """Malformed symbol input: wrong shape, non-PSD real part, bad JSON."""

    exit_code = 2


class SingularSpaceNonTrivial(QuadSubError):
    """The singular space S is not {0}; flow and weight bounds do not apply."""

    exit_code = 3


class NotConvergedError(QuadSubError):
    exit_code = 4


class QuadratureNotConverged(NotConvergedError):
    pass


class ExpmNotConverged(NotConvergedError):
    pass


class NoOrderFound(NotConvergedError):
    pass


class NoStableC0(NotConvergedError):
    pass


class InsufficientDecayRange(NotConvergedError):
    pass


class CutoffTooSmall(NotConvergedError):
    pass


class DegenerateFit(NotConvergedError):
    """A log-log fit received a non-positive value, so the quantity is below rounding."""


class BlowupError(QuadSubError):
    """A quantity left the window where the small-time analysis is valid."""

    exit_code = 4


class WeightBlowup(BlowupError):
    pass


class TanSingular(BlowupError):
    pass


class PlaneNotGraph(BlowupError):
    pass


class DegenerateCriticalPoint(BlowupError):
    pass


class BasisOverflow(BlowupError):
    pass
