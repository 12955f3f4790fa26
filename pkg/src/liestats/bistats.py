"""Bi-invariant mean, covariance, Mahalanobis distance, Hotelling T^2 and
Bhattacharyya distance for samples in a matrix Lie group.

Covariances are always expressed at the identity: the observations of a
sample are first translated by the inverse of its bi-invariant mean and the
second moments of the logarithm coordinates are taken there.

The single-sample functions (:func:`bi_invariant_mean`,
:func:`hotelling_t2`, ...) are thin wrappers over batched kernels
(:func:`batch_means`, :func:`batch_statistic`) that evaluate many samples of
equal size at once and report failures through status codes instead of
exceptions.  The permutation test relies on the batched form.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (
    GroupMismatchError, MembershipError, NoConvergenceError, NonpositiveDeterminantError,
    OutOfDomainError, SingularCovarianceError,
)
from .liegroup import GroupElement, MatrixGroup

__all__ = [
    "SampleSet", "MeanResult", "Covariance", "Statistic", "Status",
    "bi_invariant_mean", "centralized_covariance", "pooled_covariance",
    "mahalanobis_sq", "hotelling_t2", "bhattacharyya", "check_sample_sizes",
    "batch_means", "batch_statistic",
]

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100
# covariances with a larger condition number count as singular
MAX_CONDITION = 1e12


class Statistic(str, enum.Enum):
    HOTELLING_T2 = "t2"
    BHATTACHARYYA = "bhattacharyya"


class Status(enum.IntEnum):
    OK = 0
    OUT_OF_DOMAIN = 1
    NO_CONVERGENCE = 2
    SINGULAR_COVARIANCE = 3
    NONPOSITIVE_DETERMINANT = 4


@dataclass(frozen=True, eq=False)
class SampleSet:
    """An ordered sample of group elements, stored as an ``(m, N, N)`` stack."""

    group: MatrixGroup
    mats: np.ndarray

    def __post_init__(self):
        mats = np.array(self.mats, dtype=float)
        n = self.group.matrix_size
        if mats.ndim != 3 or mats.shape[1:] != (n, n):
            raise ValueError(f"{self.group.name} samples need shape (m, {n}, {n}), got {mats.shape}")
        if len(mats) < 1:
            raise ValueError("a sample needs at least one element")
        bad = np.flatnonzero(~self.group.contains(mats))
        if len(bad):
            raise MembershipError(f"element {bad[0]} is not in {self.group.name}")
        mats.setflags(write=False)
        object.__setattr__(self, "mats", mats)

    @classmethod
    def from_elements(cls, elements):
        elements = list(elements)
        if not elements:
            raise ValueError("a sample needs at least one element")
        group = elements[0].group
        if any(e.group != group for e in elements):
            raise GroupMismatchError("all elements of a sample must share one group")
        return cls(group, np.stack([e.mat for e in elements]))

    @property
    def size(self):
        return len(self.mats)

    def __len__(self):
        return len(self.mats)

    @property
    def elements(self):
        return [GroupElement(self.group, a) for a in self.mats]

    def left_translate(self, f):
        return SampleSet(self.group, np.asarray(f) @ self.mats)

    def right_translate(self, f):
        return SampleSet(self.group, self.mats @ np.asarray(f))

    def inverted(self):
        return SampleSet(self.group, self.group.inv(self.mats))


@dataclass(frozen=True)
class MeanResult:
    mean: GroupElement
    iterations: int
    residual_norm: float


@dataclass(frozen=True, eq=False)
class Covariance:
    """A k x k covariance of Lie algebra coordinates at the identity."""

    group: MatrixGroup
    mat: np.ndarray

    def __post_init__(self):
        mat = np.array(self.mat, dtype=float)
        k = self.group.dim
        if mat.shape != (k, k):
            raise ValueError(f"covariance on {self.group.name} must be {k}x{k}")
        scale = max(np.abs(mat).max(), 1.0)
        if np.abs(mat - mat.T).max() > 1e-12 * scale:
            raise ValueError("covariance must be symmetric")
        mat = 0.5 * (mat + mat.T)
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)


# batched kernels


def batch_means(group, mats, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Bi-invariant means of many equally sized samples at once.

    Runs the fixed-point iteration ``g <- g exp(mean_i log(g^-1 g_i))``
    started from the first element of each sample.  After the update norm
    drops below ``tol`` the last update is applied once more when that
    lowers the residual, which makes the mean nearly independent of the
    starting element.  Samples that have
    converged or failed are frozen while the others continue, so each
    result is independent of the rest of the batch.

    Parameters
    ----------
    group : MatrixGroup
    mats : (P, m, N, N) ndarray
    tol : float
        Convergence threshold on the norm of the update coordinates.
    max_iter : int
        Maximum number of evaluations of the barycentric residual.

    Returns
    -------
    dict
        ``mean`` (P, N, N), ``logs`` (P, m, k) coordinates of
        ``log(mean^-1 g_i)`` at the returned mean, ``iterations`` (P,),
        ``residual`` (P,) norm of the summed logs, ``status`` (P,) of
        :class:`Status` codes, and ``bad_index`` (P,) the first element
        whose logarithm left the domain (or -1).
    """
    mats = np.asarray(mats, dtype=float)
    p, m = mats.shape[:2]
    mean = mats[:, 0].copy()
    logs = np.zeros((p, m, group.dim))
    iterations = np.zeros(p, dtype=int)
    residual = np.full(p, np.nan)
    status = np.full(p, Status.NO_CONVERGENCE, dtype=int)
    bad_index = np.full(p, -1)
    last_update = np.zeros((p, group.dim))
    active = np.arange(p)

    for _ in range(max_iter):
        if len(active) == 0:
            break
        g = mean[active]
        v, ok = group.log(group.inv(g)[:, None] @ mats[active], return_mask=True)
        iterations[active] += 1
        failed = ~ok.all(axis=1)
        if failed.any():
            rows = active[failed]
            status[rows] = Status.OUT_OF_DOMAIN
            bad_index[rows] = np.argmin(ok[failed], axis=1)
        update = v.mean(axis=1)
        step = np.linalg.norm(update, axis=1)
        done = ~failed & (step <= tol)
        rows = active[done]
        status[rows] = Status.OK
        residual[rows] = m * step[done]
        logs[rows] = v[done]
        last_update[rows] = update[done]
        go = ~failed & ~done
        rows = active[go]
        mean[rows] = g[go] @ group.exp(update[go])
        active = rows

    # one refinement step past the stopping point; kept only if it lowers the residual
    rows = np.flatnonzero((status == Status.OK) & last_update.any(axis=1))
    if len(rows):
        cand = mean[rows] @ group.exp(last_update[rows])
        v, ok = group.log(group.inv(cand)[:, None] @ mats[rows], return_mask=True)
        res = m * np.linalg.norm(v.mean(axis=1), axis=1)
        better = ok.all(axis=1) & (res <= residual[rows])
        rows, cand, v, res = rows[better], cand[better], v[better], res[better]
        mean[rows], logs[rows], residual[rows] = cand, v, res
    return {
        "mean": mean, "logs": logs, "iterations": iterations,
        "residual": residual, "status": status, "bad_index": bad_index,
    }


def _spd_eig(cov):
    """Eigen-decomposition with a validity mask and failure status."""
    w, u = np.linalg.eigh(cov)
    top = np.abs(w).max(axis=-1)
    low = w[..., 0]
    negative = low < -1e-12 * np.maximum(top, 1e-300)
    singular = ~negative & ((low <= 0) | (top > MAX_CONDITION * np.where(low > 0, low, 1.0)))
    status = np.where(negative, Status.NONPOSITIVE_DETERMINANT,
                      np.where(singular, Status.SINGULAR_COVARIANCE, Status.OK))
    w = np.where(status[..., None] == Status.OK, w, 1.0)
    return w, u, status


def _quadratic(w, u, v):
    y = (np.swapaxes(u, -1, -2) @ v[..., None])[..., 0]
    return (y * y / w).sum(axis=-1)


def _factor_eig(rows):
    """Eigen-decomposition of ``rows^T rows`` through the SVD of ``rows``.

    Working with the square-root factor keeps the accuracy of the smallest
    eigenvalues at ``eps * sqrt(cond)`` instead of ``eps * cond``, which
    matters for the nearly flat directions of per-triangle Jacobians.
    """
    k = rows.shape[-1]
    if rows.shape[-2] < k:
        shape = rows.shape[:-2]
        return (np.ones(shape + (k,)), np.broadcast_to(np.eye(k), shape + (k, k)),
                np.full(shape, Status.SINGULAR_COVARIANCE))
    _, sv, vh = np.linalg.svd(rows, full_matrices=False)
    w = sv[..., ::-1] ** 2
    u = np.swapaxes(vh[..., ::-1, :], -1, -2)
    top, low = w[..., -1], w[..., 0]
    singular = (low <= 0) | (top > MAX_CONDITION * np.where(low > 0, low, 1.0))
    status = np.where(singular, Status.SINGULAR_COVARIANCE, Status.OK)
    w = np.where(singular[..., None], 1.0, w)
    return w, u, status


def batch_statistic(group, a, b, statistic=Statistic.HOTELLING_T2,
                    tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Two-sample statistic for many pairs of samples at once.

    Parameters
    ----------
    a : (P, m, N, N) ndarray
    b : (P, n, N, N) ndarray
    statistic : Statistic or str

    Returns
    -------
    values : (P,) ndarray
        NaN where ``status`` is not OK.
    status : (P,) ndarray of :class:`Status` codes
    """
    statistic = Statistic(statistic)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = a.shape[1], b.shape[1]
    ra = batch_means(group, a, tol, max_iter)
    rb = batch_means(group, b, tol, max_iter)
    status = np.maximum(ra["status"], rb["status"])
    ok = status == Status.OK

    values = np.full(len(a), np.nan)
    if not ok.any():
        return values, status
    idx = np.flatnonzero(ok)
    ga, gb = ra["mean"][idx], rb["mean"][idx]
    diff, dok = group.log(group.inv(ga) @ gb, return_mask=True)
    va, vb = ra["logs"][idx], rb["logs"][idx]

    # covariances enter only through square-root factors: cov = rows^T rows
    if statistic is Statistic.HOTELLING_T2:
        pooled = np.concatenate([va, vb], axis=1) / np.sqrt(m + n - 2)
        w, u, st = _factor_eig(pooled)
        vals = m * n / (m + n) * _quadratic(w, u, diff)
    else:
        s = np.concatenate([va / np.sqrt(2 * m), vb / np.sqrt(2 * n)], axis=1)
        w, u, st = _factor_eig(s)
        wa, _, sta = _factor_eig(va / np.sqrt(m))
        wb, _, stb = _factor_eig(vb / np.sqrt(n))
        st = np.maximum(st, np.maximum(sta, stb))
        logdet = np.log(w).sum(-1) - 0.5 * (np.log(wa).sum(-1) + np.log(wb).sum(-1))
        vals = _quadratic(w, u, diff) / 8 + 0.5 * logdet
    st = np.where(dok, st, Status.OUT_OF_DOMAIN)
    status[idx] = st
    good = st == Status.OK
    values[idx[good]] = vals[good]
    return values, status


# single-sample API


def _raise_for(status, what, bad_index=-1, max_iter=None):
    if status == Status.OUT_OF_DOMAIN:
        where = f" (element {bad_index})" if bad_index >= 0 else ""
        raise OutOfDomainError(f"{what}: logarithm left its domain{where}; data too dispersed",
                               index=bad_index if bad_index >= 0 else None)
    if status == Status.NO_CONVERGENCE:
        raise NoConvergenceError(f"{what}: mean iteration did not converge in {max_iter} iterations")
    if status == Status.SINGULAR_COVARIANCE:
        raise SingularCovarianceError(f"{what}: covariance is singular or ill-conditioned")
    if status == Status.NONPOSITIVE_DETERMINANT:
        raise NonpositiveDeterminantError(f"{what}: covariance determinant is not positive")


def bi_invariant_mean(s, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Solve the group barycentric equation ``sum_i log(g^-1 g_i) = 0``.

    Raises
    ------
    OutOfDomainError
        ``index`` names the first sample element whose logarithm failed.
    NoConvergenceError
    """
    r = batch_means(s.group, s.mats[None], tol, max_iter)
    _raise_for(r["status"][0], "bi-invariant mean", int(r["bad_index"][0]), max_iter)
    return MeanResult(GroupElement(s.group, r["mean"][0]), int(r["iterations"][0]),
                      float(r["residual"][0]))


def centralized_covariance(s, mean):
    if mean.group != s.group:
        raise GroupMismatchError("mean and sample live in different groups")
    grp = s.group
    v = grp.log(grp.inv(mean.mat) @ s.mats)
    return Covariance(grp, v.T @ v / len(v))


def pooled_covariance(sg, m, sh, n):
    """``(m * sg + n * sh) / (m + n - 2)``."""
    if sg.group != sh.group:
        raise GroupMismatchError("covariances live in different groups")
    if m < 1 or n < 1 or m + n <= 2:
        raise ValueError("pooled covariance needs m, n >= 1 and m + n > 2")
    return Covariance(sg.group, (m * sg.mat + n * sh.mat) / (m + n - 2))


def mahalanobis_sq(mean, cov, f):
    """Squared bi-invariant Mahalanobis distance of ``f`` to ``(mean, cov)``.

    A singular covariance raises :class:`SingularCovarianceError`; a
    pseudo-inverse would break bi-invariance.
    """
    if not (mean.group == cov.group == f.group):
        raise GroupMismatchError("all arguments must share one group")
    grp = mean.group
    v = grp.log(grp.inv(mean.mat) @ f.mat)
    w, u, status = _spd_eig(cov.mat)
    if status != Status.OK:
        raise SingularCovarianceError("Mahalanobis distance needs an invertible covariance")
    return float(_quadratic(w, u, v))


def check_sample_sizes(statistic, dim, m, n):
    """Raise :class:`SingularCovarianceError` when the covariances cannot be full rank.

    At the mean the logarithms sum to zero, so a centralized covariance of
    ``m`` observations has rank at most ``m - 1`` and the pooled one at
    most ``m + n - 2``.
    """
    statistic = Statistic(statistic)
    if statistic is Statistic.HOTELLING_T2:
        if m + n - 2 < dim:
            raise SingularCovarianceError(
                f"Hotelling T^2 needs m + n - 2 >= {dim} (the group dimension) for an "
                f"invertible pooled covariance; got m = {m}, n = {n}")
    elif min(m, n) - 1 < dim:
        raise SingularCovarianceError(
            f"Bhattacharyya distance needs m - 1 >= {dim} and n - 1 >= {dim} for invertible "
            f"sample covariances; got m = {m}, n = {n}")


def _two_sample(s1, s2, statistic, tol, max_iter):
    if s1.group != s2.group:
        raise GroupMismatchError("samples live in different groups")
    check_sample_sizes(statistic, s1.group.dim, len(s1), len(s2))
    values, status = batch_statistic(s1.group, s1.mats[None], s2.mats[None], statistic, tol, max_iter)
    if status[0] != Status.OK:
        for s in (s1, s2):
            bi_invariant_mean(s, tol, max_iter)
        _raise_for(status[0], Statistic(statistic).value, max_iter=max_iter)
    return float(values[0])


def hotelling_t2(s1, s2, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Bi-invariant Hotelling T^2: ``mn/(m+n)`` times the squared Mahalanobis
    distance of ``mean1^-1 mean2`` to the identity under the pooled covariance."""
    return _two_sample(s1, s2, Statistic.HOTELLING_T2, tol, max_iter)


def bhattacharyya(s1, s2, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Bi-invariant Bhattacharyya distance.

    ``(1/8) v' S^-1 v + (1/2) log(|S| / sqrt(|C1| |C2|))`` with ``C1, C2``
    the centralized covariances, ``S = (C1 + C2) / 2`` and ``v`` the
    logarithm of ``mean1^-1 mean2``.
    """
    return _two_sample(s1, s2, Statistic.BHATTACHARYYA, tol, max_iter)
