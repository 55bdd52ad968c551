"""Exception hierarchy shared by all modules."""


class SpheroscatError(Exception):
    """Base class for every error raised by this package."""


class ConvergenceError(SpheroscatError, ArithmeticError):
    """A series, eigensolve or ODE integration did not reach its tolerance.

    ``mode`` carries ``(kind, c, m, n)`` when the failure is tied to a
    single spheroidal mode so that callers can report it.
    """

    def __init__(self, message, *, mode=None, truncation=None, partial=None, tail=None):
        super().__init__(message)
        self.mode = mode
        self.truncation = truncation
        self.partial = partial
        self.tail = tail

    def __str__(self):
        msg = super().__str__()
        if self.mode is not None:
            kind, c, m, n = self.mode
            msg += f" [kind={kind}, c={c!r}, m={m}, n={n}"
            if self.truncation is not None:
                msg += f", truncation={self.truncation}"
            msg += "]"
        return msg


class AccuracyError(ConvergenceError):
    """A result was computed but failed its own accuracy certificate."""


class TruncationError(ConvergenceError):
    """A truncated double series hit its mode limits before converging."""


class DomainError(SpheroscatError, ValueError):
    """Input outside the domain of an operation (e.g. inside the scatterer)."""


class ResonanceError(SpheroscatError, ZeroDivisionError):
    """The boundary factor denominator vanished for some mode."""
