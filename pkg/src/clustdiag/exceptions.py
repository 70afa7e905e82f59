"""Exception and warning classes used across the package."""


class DesignError(ValueError):
    """Raised when data or a model description cannot produce a usable design."""


class NotIdentifiedError(DesignError):
    """Raised when the coefficient of interest is not identified."""


class FilterSyntaxError(ValueError):
    """Raised for a malformed sample-filter expression."""


class ClusterDiagnosticWarning(UserWarning):
    """Base class for warnings emitted by the diagnostics pipeline."""


class ZeroedCoefficientWarning(ClusterDiagnosticWarning):
    """A delete-one-cluster coefficient of interest was set to zero.

    This happens when the coefficient cannot be identified once a cluster is
    removed; the generalized inverse then zeroes it.
    """


class NestingWarning(ClusterDiagnosticWarning):
    """The absorbed fixed effects are not nested within clusters."""
