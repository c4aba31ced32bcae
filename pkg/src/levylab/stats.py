"""Streaming Monte Carlo accumulators and the interval estimates used in tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _st

__all__ = [
    "EstimatorAccumulator",
    "Interval",
    "wilson_interval",
    "two_proportion_z",
    "median_interval",
]


@dataclass
class EstimatorAccumulator:
    """Count, mean and centered second moment, mergeable (Chan et al. update).

    With ``edges`` set, a histogram of the observations is kept as well.
    """

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    edges: np.ndarray | None = None
    hist: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.edges is not None:
            self.edges = np.asarray(self.edges, dtype=np.float64)
            if self.hist is None:
                self.hist = np.zeros(self.edges.size + 1, dtype=np.int64)

    def add(self, x) -> "EstimatorAccumulator":
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if x.size == 0:
            return self
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("non-finite observation")
        batch = EstimatorAccumulator(int(x.size), float(x.mean()), float(np.sum((x - x.mean()) ** 2)))
        if self.edges is not None:
            # bucket 0 is below edges[0], the last bucket is at or above edges[-1]
            batch.edges = self.edges
            batch.hist = np.bincount(np.searchsorted(self.edges, x, side="right"),
                                     minlength=self.edges.size + 1)
        self._absorb(batch)
        return self

    def _absorb(self, other: "EstimatorAccumulator"):
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
        else:
            n = self.count + other.count
            delta = other.mean - self.mean
            self.mean += delta * other.count / n
            self.m2 += other.m2 + delta * delta * self.count * other.count / n
            self.count = n
        if self.hist is not None and other.hist is not None:
            self.hist = self.hist + other.hist

    def merge(self, other: "EstimatorAccumulator") -> "EstimatorAccumulator":
        if (self.edges is None) != (other.edges is None) or (
            self.edges is not None and not np.array_equal(self.edges, other.edges)
        ):
            raise ValueError("cannot merge accumulators with different histogram edges")
        out = EstimatorAccumulator(self.count, self.mean, self.m2, self.edges,
                                   None if self.hist is None else self.hist.copy())
        out._absorb(other)
        return out

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else math.nan

    @property
    def se(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 1 else math.nan


@dataclass(frozen=True)
class Interval:
    estimate: float
    lo: float
    hi: float


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> Interval:
    if n <= 0:
        return Interval(math.nan, math.nan, math.nan)
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return Interval(p, max(0.0, centre - half), min(1.0, centre + half))


def two_proportion_z(k1: int, n1: int, k2: int, n2: int) -> tuple[float, float]:
    """Pooled two-proportion z statistic and its two-sided p-value."""
    p = (k1 + k2) / (n1 + n2)
    var = p * (1 - p) * (1 / n1 + 1 / n2)
    if var == 0:
        return 0.0, 1.0
    z = (k1 / n1 - k2 / n2) / math.sqrt(var)
    return z, 2 * _st.norm.sf(abs(z))


def median_interval(x, level: float = 0.95) -> Interval:
    """Distribution-free interval for the median from binomial order statistics."""
    x = np.sort(np.asarray(x, dtype=np.float64))
    n = x.size
    if n == 0:
        return Interval(math.nan, math.nan, math.nan)
    med = float(np.median(x))
    alpha = 1 - level
    lo = int(_st.binom.ppf(alpha / 2, n, 0.5))
    hi = int(_st.binom.isf(alpha / 2, n, 0.5))
    lo = min(max(lo - 1, 0), n - 1)
    hi = min(max(hi, 0), n - 1)
    return Interval(med, float(x[lo]), float(x[hi]))
