"""Bi-invariant two-sample statistics and permutation tests on matrix Lie groups."""

__version__ = "0.1.0"

from .bistats import (  # noqa: E402
    Covariance, MeanResult, SampleSet, Statistic, bhattacharyya, bi_invariant_mean,
    centralized_covariance, hotelling_t2, mahalanobis_sq, pooled_covariance,
)
from .liegroup import (  # noqa: E402
    SE3, SO3, Euclidean, GLPlus, GroupElement, TangentVector, adjoint, compose,
    group_exp, group_from_name, group_log, identity, inverse, log_at,
)
from .twosample import (  # noqa: E402
    BatchResult, PermutationConfig, TestResult, batch_test, bh_fdr, permutation_test,
)
