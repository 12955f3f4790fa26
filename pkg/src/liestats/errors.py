"""Exception hierarchy shared by all modules."""


class LieStatsError(Exception):
    """Base class for all library errors."""


class GroupMismatchError(LieStatsError, ValueError):
    """Operands belong to different groups."""


class MembershipError(LieStatsError, ValueError):
    """A matrix does not belong to the claimed group."""


class OutOfDomainError(LieStatsError):
    """An argument left the domain of the principal group logarithm.

    ``index`` names the offending element of a sample when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NoConvergenceError(LieStatsError):
    """The bi-invariant mean iteration exceeded its iteration budget."""


class SingularCovarianceError(LieStatsError):
    """A covariance is not invertible (or too ill-conditioned to invert)."""


class NonpositiveDeterminantError(LieStatsError):
    """A covariance determinant needed for a log-determinant is not positive."""


class StatisticFailedError(LieStatsError):
    """The test statistic could not be evaluated on the observed labeling."""


class DegeneratePermutationsError(StatisticFailedError):
    """Too many permuted labelings failed to produce a statistic."""


class DegenerateTriangleError(LieStatsError):
    """A triangle has (numerically) zero area."""

    def __init__(self, message, face=None):
        super().__init__(message)
        self.face = face


class OrientationFlipError(LieStatsError):
    """A per-triangle deformation gradient has non-positive determinant."""

    def __init__(self, message, face=None):
        super().__init__(message)
        self.face = face


class MeshError(LieStatsError, ValueError):
    """Invalid mesh: bad indices, disconnected, mismatched connectivity."""


class SingularSystemError(LieStatsError):
    """The reconstruction linear system could not be factorized."""


class FormatError(LieStatsError, ValueError):
    """An input file could not be parsed."""
