"""Exception taxonomy for the cmgl package.

Usage errors (bad shapes, bad values, unreadable inputs) derive from
``InputError`` so callers can separate them from computational failures
(singular systems, infeasible parameter regions), which derive directly
from ``CmglError``.
"""


class CmglError(Exception):
    """Base class for all errors raised by cmgl."""


class InputError(CmglError, ValueError):
    """Invalid user input: shapes, values, file contents, configuration."""


class NotPositiveDefiniteError(CmglError):
    """A matrix required to be positive definite is not."""


class SingularMatrixError(CmglError):
    """A matrix that must be inverted is numerically singular."""


class SingularBError(SingularMatrixError):
    """The linear combination B is singular where the link needs its inverse."""


class SingularGramError(SingularMatrixError):
    """The trace Gram matrix of the least-squares system is singular."""


class SingularInformationError(SingularMatrixError):
    """The plug-in information matrix is singular; no asymptotic covariance."""


class InfeasibleStartError(CmglError):
    """No positive definite starting point could be found for the optimizer."""


class FitFailedError(CmglError):
    """A fit required by a larger pipeline did not converge or errored."""


class DegenerateSampleError(CmglError, ValueError):
    """The sample carries no signal (for example, all responses are zero)."""


class DegenerateVarianceError(CmglError):
    """A variance estimate collapsed to zero where a positive value is needed."""
