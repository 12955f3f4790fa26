"""Permutation two-sample tests with Benjamini-Hochberg control over feature batches."""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bistats import Statistic, Status, _raise_for, batch_statistic, check_sample_sizes
from .errors import (
    DegeneratePermutationsError, GroupMismatchError, LieStatsError, StatisticFailedError,
)

__all__ = [
    "PermutationConfig", "TestResult", "BatchResult", "permutation_test",
    "bh_fdr", "batch_test", "feature_seed",
]

log = logging.getLogger(__name__)

MAX_EXHAUSTIVE = 200_000
# permutations are drawn and evaluated in fixed-size chunks, each seeded
# from (seed, chunk index) so results do not depend on evaluation order
CHUNK = 512
MAX_DEGENERATE_FRACTION = 0.05
# relative tolerance under which a permuted statistic ties with the observed one
TIE_RTOL = 1e-9
TIE_ATOL = 1e-12


@dataclass(frozen=True)
class PermutationConfig:
    num_permutations: int = 10_000
    seed: int = 0
    statistic: Statistic = Statistic.HOTELLING_T2
    exhaustive: bool = False
    tol: float = 1e-12
    max_iter: int = 100

    def __post_init__(self):
        if self.num_permutations < 1:
            raise ValueError("num_permutations must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "statistic", Statistic(self.statistic))


@dataclass(frozen=True)
class TestResult:
    statistic_value: float
    p_value: float
    num_permutations_used: int
    num_exceeding: int
    degenerate_permutations: int
    error: str | None = None
    null_distribution: np.ndarray | None = field(default=None, repr=False, compare=False)

    __test__ = False  # not a pytest class

    @property
    def ok(self):
        return self.error is None

    def to_dict(self):
        out = {
            "statistic": _none_if_nan(self.statistic_value),
            "p": _none_if_nan(self.p_value),
            "N": self.num_permutations_used,
            "exceed": self.num_exceeding,
            "degenerate": self.degenerate_permutations,
        }
        if self.error is not None:
            out["error"] = self.error
        return out


@dataclass(frozen=True)
class BatchResult:
    per_feature: list
    adjusted_p: np.ndarray
    rejected: np.ndarray
    alpha: float

    @property
    def raw_p(self):
        return np.array([r.p_value for r in self.per_feature])

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "features": [r.to_dict() for r in self.per_feature],
            "adjusted_p": [_none_if_nan(x) for x in self.adjusted_p],
            "rejected": [bool(x) for x in self.rejected],
        }


def _none_if_nan(x):
    return None if math.isnan(x) else float(x)


def feature_seed(seed, index):
    """Deterministic 64-bit seed for feature ``index`` of a batch."""
    state = np.random.SeedSequence([seed, index]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def _random_labelings(m, total, count, seed):
    """Yield ``(first, second)`` index arrays for ``count`` uniform relabelings."""
    for chunk, start in enumerate(range(0, count, CHUNK)):
        size = min(CHUNK, count - start)
        rng = np.random.default_rng(np.random.SeedSequence([seed, chunk]))
        perm = rng.permuted(np.tile(np.arange(total), (size, 1)), axis=1)
        yield perm[:, :m], perm[:, m:]


def _all_labelings(m, total):
    """Every split into sizes m and total - m except the observed one."""
    combos = itertools.combinations(range(total), m)
    next(combos)  # (0, ..., m-1) is the observed labeling
    while True:
        block = list(itertools.islice(combos, CHUNK))
        if not block:
            return
        first = np.array(block)
        mask = np.ones((len(block), total), dtype=bool)
        np.put_along_axis(mask, first, False, axis=1)
        second = np.nonzero(mask)[1].reshape(len(block), total - m)
        yield first, second


def permutation_test(s1, s2, cfg=PermutationConfig(), keep_null=False):
    """Permutation test of equal distributions based on a bi-invariant statistic.

    The ``m + n`` observations are pooled and repeatedly split into groups
    of sizes ``m`` and ``n`` uniformly at random; the p-value is
    ``(1 + #{permuted >= observed}) / (1 + N)``.  With ``cfg.exhaustive``
    and at most 200000 splits, all splits other than the observed one are
    enumerated instead, which makes the p-value exact.

    Permuted splits on which the statistic cannot be evaluated are skipped
    and counted in ``degenerate_permutations``; more than 5% of them is an
    error.

    Raises
    ------
    StatisticFailedError
        If the statistic fails on the observed labeling (the cause is
        chained) or too many permutations are degenerate.
    """
    if s1.group != s2.group:
        raise GroupMismatchError("samples live in different groups")
    group = s1.group
    m, n = len(s1), len(s2)
    total = m + n
    try:
        check_sample_sizes(cfg.statistic, group.dim, m, n)
    except LieStatsError as exc:
        raise StatisticFailedError(str(exc)) from exc
    pooled = np.concatenate([s1.mats, s2.mats])

    def evaluate(first, second):
        return batch_statistic(group, pooled[first], pooled[second], cfg.statistic,
                               cfg.tol, cfg.max_iter)

    observed, status = evaluate(np.arange(m)[None], np.arange(m, total)[None])
    if status[0] != Status.OK:
        try:
            _raise_for(status[0], f"{cfg.statistic.value} on the observed labeling",
                       max_iter=cfg.max_iter)
        except LieStatsError as exc:
            raise StatisticFailedError(str(exc)) from exc
    observed = float(observed[0])

    exhaustive = cfg.exhaustive and math.comb(total, m) <= MAX_EXHAUSTIVE
    if cfg.exhaustive and not exhaustive:
        log.warning("C(%d, %d) splits exceed %d; falling back to %d random permutations",
                    total, m, MAX_EXHAUSTIVE, cfg.num_permutations)
    labelings = (_all_labelings(m, total) if exhaustive
                 else _random_labelings(m, total, cfg.num_permutations, cfg.seed))

    threshold = observed - max(TIE_RTOL * abs(observed), TIE_ATOL)
    used = exceeding = degenerate = 0
    null = []
    for first, second in labelings:
        values, status = evaluate(first, second)
        good = status == Status.OK
        degenerate += int((~good).sum())
        used += int(good.sum())
        exceeding += int((values[good] >= threshold).sum())
        if keep_null:
            null.append(values)

    attempted = used + degenerate
    if degenerate > MAX_DEGENERATE_FRACTION * attempted:
        raise DegeneratePermutationsError(
            f"{degenerate} of {attempted} permuted labelings failed "
            f"(limit {MAX_DEGENERATE_FRACTION:.0%}); pooled data too dispersed for the statistic")
    return TestResult(
        statistic_value=observed,
        p_value=(1 + exceeding) / (1 + used),
        num_permutations_used=used,
        num_exceeding=exceeding,
        degenerate_permutations=degenerate,
        null_distribution=np.concatenate(null) if keep_null else None,
    )


def bh_fdr(p_values, alpha=0.05):
    """Benjamini-Hochberg step-up adjustment.

    Returns
    -------
    adjusted : ndarray
        ``min_{j >= i} min(1, M p_(j) / j)`` mapped back to input order.
    rejected : ndarray of bool
        ``adjusted < alpha``.
    """
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1 or len(p) == 0:
        raise ValueError("need a non-empty 1-d sequence of p-values")
    if not np.all((p >= 0) & (p <= 1)):
        raise ValueError("p-values must lie in [0, 1]")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    count = len(p)
    order = np.argsort(p, kind="stable")
    scaled = p[order] * count / np.arange(1, count + 1)
    stepped = np.minimum.accumulate(scaled[::-1])[::-1]
    adjusted = np.empty(count)
    adjusted[order] = np.minimum(stepped, 1.0)
    return adjusted, adjusted < alpha


def _failed(exc):
    return TestResult(math.nan, math.nan, 0, 0, 0, error=f"{type(exc).__name__}: {exc}")


def batch_test(features, cfg=PermutationConfig(), alpha=0.05, n_jobs=1, feature_ids=None):
    """Per-feature permutation tests followed by BH adjustment across features.

    Feature ``i`` is tested with seed ``feature_seed(cfg.seed, feature_ids[i])``
    (``feature_ids`` defaults to the positions).  A feature whose test fails
    gets a result with ``error`` set and a NaN p-value; it is left out of the
    FDR adjustment and never rejected.
    """
    features = list(features)
    if not features:
        raise ValueError("need at least one feature")
    ids = range(len(features)) if feature_ids is None else [int(i) for i in feature_ids]
    if len(ids) != len(features):
        raise ValueError("need one feature id per feature")

    def run(item):
        index, (s1, s2) = item
        sub = PermutationConfig(cfg.num_permutations, feature_seed(cfg.seed, index),
                                cfg.statistic, cfg.exhaustive, cfg.tol, cfg.max_iter)
        try:
            return permutation_test(s1, s2, sub)
        except LieStatsError as exc:
            return _failed(exc)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            results = list(pool.map(run, zip(ids, features)))
    else:
        results = [run(item) for item in zip(ids, features)]

    raw = np.array([r.p_value for r in results])
    adjusted = np.full(len(raw), np.nan)
    rejected = np.zeros(len(raw), dtype=bool)
    valid = ~np.isnan(raw)
    if valid.any():
        adjusted[valid], rejected[valid] = bh_fdr(raw[valid], alpha)
    return BatchResult(results, adjusted, rejected, alpha)
