"""Exception types raised across the package."""


class DynCommError(Exception):
    """Base class for all errors raised by dyncomm."""


class GraphFormatError(DynCommError, ValueError):
    """Input file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GraphBoundsError(DynCommError, IndexError):
    """A vertex id is outside the valid range."""


class GraphIntegrityError(DynCommError, ValueError):
    """A batch or auxiliary state is inconsistent with the graph."""


class UndefinedMetricError(DynCommError, ArithmeticError):
    """A metric was requested on a graph without edges."""


class ContractViolation(DynCommError, ValueError):
    """An argument breaks an operation's precondition."""


class CapacityError(DynCommError, ValueError):
    """A requested batch cannot be drawn from the graph."""
