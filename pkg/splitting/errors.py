"""
Exception types raised by the splitting solver.

Every error derives from SplittingError and from the closest builtin, so
callers can catch either family.
"""


class SplittingError(Exception):
    """Base class for all solver errors."""


class DimensionMismatchError(SplittingError, ValueError):
    """Block sizes or indices do not match the declared problem dimensions."""


class InfeasibleProjectionError(SplittingError, RuntimeError):
    """No candidate of the active-set enumeration was feasible."""


class InnerSolverContractError(SplittingError, RuntimeError):
    """A block step violated the relative-error criterion."""


class DegenerateSeparatorError(SplittingError, RuntimeError):
    """The separator gradient vanished although the return test did not fire."""


class UnsupportedCheckError(SplittingError, NotImplementedError):
    """A membership check needs data the oracle does not expose."""


class IncompleteTraceError(SplittingError, ValueError):
    """A trace is missing quantities an audit depends on."""


class ProblemFormatError(SplittingError, ValueError):
    """A problem, trace or summary file could not be parsed."""


class VariantCompatibilityError(SplittingError, ValueError):
    """The requested variant does not fit the operator regularity."""
