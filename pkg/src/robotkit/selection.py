"""Pick a retraining subset from a scored test suite.

Every strategy returns exactly ``n`` distinct cases of the input suite, in
the order they were picked.  Ties in any ranking fall back to the original
suite index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConfigError
from .suite import TestSuite

KM_ST = "km-st"
BE_ST = "be-st"
GINI = "gini"
RANDOM = "random"
STRATEGIES = (KM_ST, BE_ST, GINI, RANDOM)


@dataclass(frozen=True)
class SelectionRequest:
    strategy: str = BE_ST
    n: int = 100
    k: int = 10
    rng_seed: int = 0
    fraction: float | None = None  # when set, n = round(fraction * |suite|)

    def __post_init__(self):
        strategy = self.strategy.lower().replace("_", "-")
        if strategy == "kmst":
            strategy = KM_ST
        elif strategy == "best":
            strategy = BE_ST
        if strategy not in STRATEGIES:
            raise ConfigError(f"unknown selection strategy {self.strategy!r}")
        object.__setattr__(self, "strategy", strategy)
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.fraction is not None and not 0 < self.fraction <= 1:
            raise ConfigError("fraction must be in (0, 1]")

    def budget(self, size: int) -> int:
        if self.fraction is not None:
            return max(1, int(round(self.fraction * size)))
        return self.n


def _check_budget(suite: TestSuite, n: int):
    if n < 1:
        raise ArgumentError("selection budget n must be positive")
    if n > len(suite):
        raise ArgumentError(f"cannot select {n} cases from a suite of {len(suite)}")


def _descending(values: np.ndarray) -> np.ndarray:
    # stable sort on the negated key keeps original order among ties
    return np.argsort(-values.astype(np.float64), kind="stable")


def km_st_indices(fol: np.ndarray, k: int, n: int, rng_seed: int) -> np.ndarray:
    """K-multisection sampling over equal-width FOL bins.

    Bins are half-open ``[lo, hi)`` except the last, which is closed.  Each
    bin gets ``n // k`` draws; the ``n % k`` extra slots go to the
    highest-FOL bins.  Bins that run short give what they have and the
    deficit is refilled uniformly from everything not yet picked.
    """
    rng = np.random.default_rng(rng_seed)
    fol = fol.astype(np.float64)
    lo, hi = fol.min(), fol.max()
    if hi <= lo:
        k = 1
    if k == 1:
        bins = np.zeros(len(fol), dtype=np.int64)
    else:
        width = (hi - lo) / k
        bins = np.minimum(np.floor((fol - lo) / width).astype(np.int64), k - 1)
    quota = np.full(k, n // k)
    quota[k - 1 : k - 1 - n % k : -1] += 1
    chosen: list[int] = []
    for b in range(k):
        members = np.flatnonzero(bins == b)
        take = min(quota[b], len(members))
        if take:
            chosen.extend(rng.choice(members, size=take, replace=False).tolist())
    short = n - len(chosen)
    if short:
        rest = np.setdiff1d(np.arange(len(fol)), chosen)
        chosen.extend(rng.choice(rest, size=short, replace=False).tolist())
    return np.asarray(chosen, dtype=np.int64)


def km_st(suite: TestSuite, k: int, n: int, rng_seed: int = 0) -> TestSuite:
    suite.require_scored()
    _check_budget(suite, n)
    if k < 1:
        raise ConfigError("k must be >= 1")
    return suite.take(km_st_indices(suite.fol, k, n, rng_seed))


def be_st_indices(fol: np.ndarray, n: int) -> np.ndarray:
    order = _descending(fol)
    top = math.ceil(n / 2)
    bottom = n // 2
    if bottom == 0:
        return order[:top]
    return np.concatenate([order[:top], order[-bottom:]])


def be_st(suite: TestSuite, n: int) -> TestSuite:
    """Bi-end selection: ceil(n/2) highest-FOL and floor(n/2) lowest-FOL cases."""
    suite.require_scored()
    _check_budget(suite, n)
    return suite.take(be_st_indices(suite.fol, n))


def gini_select(suite: TestSuite, n: int) -> TestSuite:
    suite.require_scored()
    _check_budget(suite, n)
    return suite.take(_descending(suite.gini)[:n])


def random_select(suite: TestSuite, n: int, rng_seed: int = 0) -> TestSuite:
    _check_budget(suite, n)
    rng = np.random.default_rng(rng_seed)
    return suite.take(rng.choice(len(suite), size=n, replace=False))


def select(suite: TestSuite, req: SelectionRequest) -> TestSuite:
    n = req.budget(len(suite))
    if req.strategy == KM_ST:
        return km_st(suite, req.k, n, req.rng_seed)
    if req.strategy == BE_ST:
        return be_st(suite, n)
    if req.strategy == GINI:
        return gini_select(suite, n)
    return random_select(suite, n, req.rng_seed)
