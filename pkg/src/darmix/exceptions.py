"""Exception types raised across the package."""


class DarmixError(Exception):
    """Base class for all package errors."""


class InfeasiblePoint(DarmixError, ValueError):
    """Mixture free coordinates that cannot be completed to a valid density."""


class InvalidParameter(DarmixError, ValueError):
    pass


class NonFiniteState(DarmixError, FloatingPointError):
    """Simulated path exploded (typically non-stationary parameters)."""


class IndexOutOfRange(DarmixError, IndexError):
    pass


class DataTooShort(DarmixError, ValueError):
    pass


class AllStartsFailed(DarmixError, RuntimeError):
    """No optimizer start reached a converged interior point."""


class SingularHessian(DarmixError, ArithmeticError):
    pass


class NotConverged(DarmixError, ValueError):
    pass


class InsufficientRows(DarmixError, ValueError):
    pass


class WindowTooShort(DarmixError, ValueError):
    pass


class MalformedCsv(DarmixError, ValueError):
    pass


class NonPositivePrice(DarmixError, ValueError):
    pass


class NonMonotoneDates(DarmixError, ValueError):
    pass


class HarnessError(DarmixError, RuntimeError):
    """Monte Carlo run exceeded the tolerated replicate failure rate."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
