"""Exception types raised across the package."""


class InvOptError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(InvOptError):
    """Vector/matrix dimensions are mutually inconsistent."""


class EnumerationCapError(InvOptError):
    """Binary enumeration would exceed the configured cap."""


class OracleKindError(InvOptError):
    """Operation requires a different feasible-set oracle kind."""


class BudgetError(InvOptError):
    """Budget is malformed or cannot be honored honestly."""


class InconsistentDataError(InvOptError):
    """No nonzero cost vector is consistent with the dataset."""


class NoInteriorError(InvOptError):
    """The consistent cone has no strict interior inside the requested set."""


class IntractableDimensionError(InvOptError):
    """Requested computation is only supported at small dimension."""


class NoExtremeRaysError(InvOptError):
    """Extreme-ray enumeration found no rays."""


class SolverError(InvOptError):
    """Numerical breakdown inside an embedded solver."""

    def __init__(self, message, pivot_log=None):
        super().__init__(message)
        self.pivot_log = pivot_log or []


class InfeasibleProblemError(InvOptError):
    """The optimization problem has no feasible point."""


class UnboundedProblemError(InvOptError):
    """The optimization problem is unbounded below."""


class IterateDivergedError(InvOptError):
    """An iterative method produced NaN/Inf iterates."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ConfigError(InvOptError):
    """Invalid experiment or trainer configuration."""
