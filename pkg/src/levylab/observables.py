"""Per-path statistics of an iterate stack and the tightness tables built from them.

``Z_n(t) = min_{k<n} |w^k_t|``; ``gamma_n(t)`` is the last zero marker of ``w^n``
at or before ``t``; ``gamma*_n(t) = max_{k<=n} gamma_k(t)``; ``nu(x)`` is the first
level whose value at time 1 is within ``x`` of 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .levy import IterateStack
from .stats import EstimatorAccumulator, Interval, wilson_interval

__all__ = [
    "HittingRecord",
    "XYEstimate",
    "PathObservables",
    "z_n",
    "z_curve",
    "gamma_n",
    "gamma_star",
    "gamma_curves",
    "nu_of_x",
    "nu_curve",
    "x_hat",
    "y_hat",
    "xy_estimates",
    "observe",
    "monotonicity_violations",
    "min_abs_curve",
    "TightnessTable",
    "tightness_report",
    "sequence_hitting_identity",
]


def z_n(stack: IterateStack, n: int, t: float) -> float:
    if n < 1:
        raise ValueError("Z_n needs n >= 1 (the minimum over no levels is not defined here)")
    if n > stack.depth + 1:
        raise ValueError(f"n={n} exceeds the available levels")
    i = stack.grid.index_of(t, "t")
    return float(np.min(np.abs(stack.values[:n, i])))


def z_curve(stack: IterateStack, t: float = 1.0) -> np.ndarray:
    """``[Z_1(t), ..., Z_{depth+1}(t)]`` (entry ``n-1`` holds ``Z_n``)."""
    i = stack.grid.index_of(t, "t")
    return np.minimum.accumulate(np.abs(stack.values[:, i]))


def gamma_n(stack: IterateStack, n: int, t: float) -> float:
    stack.grid.index_of(t, "t")
    z = stack.zeros(n)
    q = z.last_before(t)
    return float(z.times[q]) if q >= 0 else 0.0


def gamma_star(stack: IterateStack, n: int, t: float) -> float:
    return max(gamma_n(stack, k, t) for k in range(n + 1))


def gamma_curves(stack: IterateStack, t: float = 1.0):
    """``(gamma, gamma_star, source)`` for levels ``0..depth``; ``source[n]`` is
    the row of ``stack.markers`` that realises ``gamma_n(t)`` (-1 for the origin)."""
    stack.grid.index_of(t, "t")
    mt = stack.markers
    g = np.zeros(stack.depth + 1)
    src = np.full(stack.depth + 1, -1, dtype=np.int64)
    for n in range(stack.depth + 1):
        rows = mt.rows(n)
        q = int(np.searchsorted(mt.times[rows], t, side="right")) - 1
        if q >= 0:
            g[n] = mt.times[rows.start + q]
            src[n] = rows.start + q
    return g, np.maximum.accumulate(g), src


@dataclass(frozen=True)
class HittingRecord:
    x: float
    nu: int | None
    censored: bool


def nu_of_x(stack: IterateStack, x: float) -> HittingRecord:
    if not x > 0:
        raise ValueError("x must be positive")
    i = stack.grid.index_of(1.0, "horizon")
    hit = np.flatnonzero(np.abs(stack.values[:, i]) < x)
    if hit.size == 0:
        return HittingRecord(float(x), None, True)
    return HittingRecord(float(x), int(hit[0]), False)


def nu_curve(stack: IterateStack, x_grid) -> np.ndarray:
    """``nu(x)`` for every ``x`` in ``x_grid``, with -1 marking censoring."""
    zs = z_curve(stack)  # zs[n] = min_{k<=n} |w^k_1|
    x = np.asarray(x_grid, dtype=np.float64)
    # first n with |w^n_1| < x is the first n with the running minimum below x
    nu = np.searchsorted(-zs, -x, side="right")
    nu = np.where(nu > stack.depth, -1, nu)
    return nu.astype(np.int64)


@dataclass(frozen=True)
class XYEstimate:
    x_hat: float
    y_hat: float  # nan when every term was skipped
    window: tuple  # (first, last) level of the X window
    y_window: tuple
    y_skipped: int
    y_missing: bool


def _window_start(N: int) -> int:
    return (N + 1) // 2


def x_hat(z, N: int) -> float:
    """``min_{ceil(N/2) <= n <= N-1} Z_{n+1}/Z_n`` with ``z[n] = Z_n`` (``z[0]`` unused)."""
    z = np.asarray(z, dtype=np.float64)
    if N < 2 or z.size < N + 1:
        raise ValueError("need N >= 2 and Z_n for n <= N")
    lo = _window_start(N)
    num = z[lo + 1 : N + 1]
    den = z[lo:N]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, num / den, np.where(num > 0, np.inf, 1.0))
    return float(np.min(r))


def y_hat(z_at_gamma, gamma, N: int):
    """``max_{ceil(N/2) <= n <= N} Z_n(g_n)/sqrt(1 - g_n)``; terms with ``g_n >= 1`` are skipped.

    ``z_at_gamma[n]`` and ``gamma[n]`` are indexed by level.  Returns
    ``(value, skipped)`` with ``value`` nan when all terms were skipped.
    """
    best, skipped = -math.inf, 0
    for n in range(_window_start(N), N + 1):
        g = gamma[n]
        if g >= 1.0:
            skipped += 1
            continue
        best = max(best, z_at_gamma[n] / math.sqrt(1.0 - g))
    return (math.nan if best == -math.inf else best), skipped


def _z_at_gamma_star(stack: IterateStack, g, gs, src):
    """``Z_n(gamma*_n(1))``: zero unless level ``n`` alone realises the maximum,
    otherwise the lower-level minimum interpolated at that marker."""
    out = np.zeros(stack.depth + 1)
    mt = stack.markers
    for n in range(1, stack.depth + 1):
        if src[n] < 0 or g[n] < gs[n] or np.any(g[:n] == gs[n]):
            continue
        out[n] = mt.minabs[src[n]]
    return out


def xy_estimates(stack: IterateStack, N: int) -> XYEstimate:
    if not 2 <= N <= stack.depth:
        raise ValueError(f"need 2 <= N <= depth, got N={N}, depth={stack.depth}")
    z = z_curve(stack)
    g, gs, src = gamma_curves(stack)
    zg = _z_at_gamma_star(stack, g, gs, src)
    y, skipped = y_hat(zg, gs, N)
    lo = _window_start(N)
    return XYEstimate(x_hat(np.concatenate([[np.inf], z]), N), y, (lo, N - 1), (lo, N), skipped, math.isnan(y))


@dataclass(frozen=True, eq=False)
class PathObservables:
    """Everything the tables need from one stack, at time 1."""

    z: np.ndarray  # Z_1..Z_{depth+1}
    gamma: np.ndarray
    gamma_star: np.ndarray
    x_grid: np.ndarray
    nu: np.ndarray  # -1 censored
    xy: XYEstimate | None = None


def observe(stack: IterateStack, x_grid=(), N: int | None = None) -> PathObservables:
    g, gs, _ = gamma_curves(stack)
    x_grid = np.asarray(x_grid, dtype=np.float64)
    return PathObservables(
        z=z_curve(stack),
        gamma=g,
        gamma_star=gs,
        x_grid=x_grid,
        nu=nu_curve(stack, x_grid) if x_grid.size else np.empty(0, np.int64),
        xy=xy_estimates(stack, N) if N is not None else None,
    )


def monotonicity_violations(obs: PathObservables) -> dict:
    """Counts of broken orderings: ``Z_n`` in n, ``nu(x)`` in x, ``gamma*_n`` in n."""
    out = {"z_increasing": int(np.sum(np.diff(obs.z) > 0)),
           "gamma_star_decreasing": int(np.sum(np.diff(obs.gamma_star) < 0)),
           "nu_increasing_in_x": 0}
    if obs.x_grid.size > 1:
        order = np.argsort(obs.x_grid, kind="stable")
        nu = obs.nu[order].astype(np.float64)
        nu[nu < 0] = 1e300  # censored ranks above every observed level
        out["nu_increasing_in_x"] = int(np.sum(np.diff(nu) > 0))
    return out


def min_abs_curve(stack: IterateStack, t_grid) -> np.ndarray:
    """``min_{n<=D} |w^n_t|`` for ``D = 0..depth`` (rows) and each probe time (columns)."""
    idx = [stack.grid.index_of(t, "t") for t in t_grid]
    return np.minimum.accumulate(np.abs(stack.values[:, idx]), axis=0)


@dataclass
class TightnessTable:
    K_grid: np.ndarray
    # rows over K: max over n of P(n Z_n > K)
    tail_nz: list = field(default_factory=list)  # Interval per K
    tail_nz_argmax: list = field(default_factory=list)
    # per n: E[n Z_n]
    mean_nz: list = field(default_factory=list)  # (mean, se)
    x_grid: np.ndarray = None
    # per x: E[x nu(x)] over uncensored paths, censored fraction
    mean_xnu: list = field(default_factory=list)  # (mean, se, count) or None
    censored_frac: list = field(default_factory=list)
    # per (x, K): bounds on P(x nu(x) > K) that censoring cannot move
    tail_xnu: list = field(default_factory=list)  # list over x of list over K of (lo, hi)


def tightness_report(records, K_grid, x_grid) -> TightnessTable:
    records = list(records)
    if len(records) < 2:
        raise ValueError("need at least two paths")
    K_grid = np.asarray(K_grid, dtype=np.float64)
    x_grid = np.asarray(x_grid, dtype=np.float64)
    z = np.stack([r.z for r in records])  # (paths, levels)
    n_levels = z.shape[1]
    nz = z * np.arange(1, n_levels + 1)
    P = z.shape[0]
    out = TightnessTable(K_grid=K_grid, x_grid=x_grid)
    for K in K_grid:
        counts = np.sum(nz > K, axis=0)
        j = int(np.argmax(counts))
        out.tail_nz.append(wilson_interval(int(counts[j]), P))
        out.tail_nz_argmax.append(j + 1)
    for n in range(n_levels):
        acc = EstimatorAccumulator().add(nz[:, n])
        out.mean_nz.append((acc.mean, acc.se))
    if x_grid.size:
        nu = np.stack([_nu_on(r, x_grid) for r in records])
        for a, x in enumerate(x_grid):
            ok = nu[:, a] >= 0
            cens = 1.0 - ok.mean()
            out.censored_frac.append(float(cens))
            if not ok.any():
                out.mean_xnu.append(None)
            else:
                acc = EstimatorAccumulator().add(x * nu[ok, a])
                out.mean_xnu.append((acc.mean, acc.se, acc.count))
            row = []
            for K in K_grid:
                lo = float(np.sum(ok & (x * nu[:, a] > K))) / P
                row.append((lo, lo + cens))
            out.tail_xnu.append(row)
    return out


def _nu_on(rec: PathObservables, x_grid) -> np.ndarray:
    if rec.x_grid.shape == x_grid.shape and np.array_equal(rec.x_grid, x_grid):
        return rec.nu
    # recompute from the running minimum at time 1
    nu = np.searchsorted(-rec.z, -x_grid, side="right")
    return np.where(nu >= rec.z.size, -1, nu)


def sequence_hitting_identity(a, x_grid=None):
    """Finite-window proxies for ``liminf a_{k+1}/a_k`` and ``liminf_{x->0} a_{n(x)}/x``.

    ``a[k-1]`` holds ``a_k`` for ``k = 1..K``.  The ratio window is
    ``ceil(K/2) <= k <= K-1``; the x window is ``a_K < x <= a_{ceil(K/2)}`` with
    ``n(x) = min{k >= 1 : a_k < x}``.  Without ``x_grid`` the points ``a_k`` of the
    window are used, where the infimum over each step is attained.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1 or a.size < 2:
        raise ValueError("need a sequence of length >= 2")
    if not np.all(a > 0):
        raise ValueError("sequence must be strictly positive")
    if np.any(np.diff(a) > 0):
        raise ValueError("sequence must be nonincreasing")
    K = a.size
    lo = (K + 1) // 2
    ratio = float(np.min(a[lo:K] / a[lo - 1 : K - 1]))
    if x_grid is None:
        x = a[lo - 1 : K - 1]
    else:
        x = np.asarray(x_grid, dtype=np.float64)
    x = x[(x > a[K - 1]) & (x <= a[lo - 1])]
    if x.size == 0:
        return ratio, math.nan
    nx = np.searchsorted(-a, -x, side="right")  # 0-based index of first a_k < x
    hitting = float(np.min(a[nx] / x))
    return ratio, hitting
