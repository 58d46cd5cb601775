"""Exception hierarchy shared by every module."""


class SGMError(Exception):
    """Base class for all errors raised by surfgrow."""


class InvalidArgumentError(SGMError, ValueError):
    pass


class OutOfDomainError(SGMError):
    """A cylinder or sample set reaches outside the stored record."""


class HistoryTooShortError(OutOfDomainError):
    pass


class ResolutionError(SGMError):
    """Too few grid points or snapshots for meaningful quadrature."""


class DegenerateError(SGMError, ZeroDivisionError):
    """A ratio diagnostic has a vanishing denominator."""


class PreconditionError(SGMError):
    pass


class BlowUpError(SGMError):
    """Time stepping produced a non-finite value.

    ``t_last`` is the last time at which the state was finite, a candidate
    singularity time.
    """

    def __init__(self, t_last: float, message: str | None = None):
        self.t_last = float(t_last)
        super().__init__(message or f"non-finite state after t={self.t_last!r}")
