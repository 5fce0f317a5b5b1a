"""Exception hierarchy shared by every memwave module."""

from __future__ import annotations


class MemwaveError(Exception):
    """Base class for all memwave failures."""


# measures
class InvalidMeasure(MemwaveError, ValueError):
    pass


class SignChangeError(InvalidMeasure):
    """A density piece changes sign inside its interval."""


class DivergentMoment(MemwaveError):
    pass


class NotStrictlyDominated(MemwaveError):
    """|mu|(R+) (or its exponential moment) is not below mu0."""


class NoFiniteMoment(MemwaveError):
    pass


class DegreeOverflow(MemwaveError):
    pass


class UnboundedSupport(MemwaveError):
    pass


# geometry
class OutOfDomain(MemwaveError, ValueError):
    pass


class EmptyDirichlet(MemwaveError):
    """The proposed Dirichlet part of the boundary has zero measure."""


# solver
class DelayUnderResolved(MemwaveError):
    pass


class HistoryExhausted(MemwaveError):
    pass


class BlowUp(MemwaveError):
    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


class CFLViolation(MemwaveError):
    pass


class UnsupportedDomain(MemwaveError):
    pass


# energy analysis
class SnapshotMissing(MemwaveError, KeyError):
    pass


class TraceMissing(MemwaveError):
    pass


class DegenerateFit(MemwaveError):
    pass


# scenarios
class ParseError(MemwaveError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


class ValidationError(MemwaveError):
    """A scenario violates one of the decay hypotheses.

    ``condition`` names the violated hypothesis, e.g. ``"Eq. 5"`` or ``"CFL"``.
    """

    def __init__(self, condition: str, message: str):
        super().__init__(f"[{condition}] {message}")
        self.condition = condition


class UnknownExample(MemwaveError, KeyError):
    pass
