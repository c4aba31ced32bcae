"""The discrete Levy transformation ``(T w)_t = int_0^t sign(w_s) dw_s``.

Signs are taken at the left end of every step, so the transform of a path with
increments ``inc`` has increments ``sign(values[:-1]) * inc``.  Iterating keeps
the sign products ``hbar_n(t_i) = prod_{k<n} sign(w^k_{t_i})`` alongside the
iterates: level ``n`` increments are exactly ``hbar_n * inc``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .paths import Grid, Path

__all__ = [
    "SignConvention",
    "MemoryBudgetError",
    "DEFAULT_MAX_ELEMENTS",
    "sign_of",
    "levy_transform",
    "IterateStack",
    "iterate",
    "iterate_levels",
    "ZeroSet",
    "zeros",
    "MarkerTable",
    "local_time_estimate",
    "discrete_local_time",
    "local_increment_check",
]

# cap on (depth + 1) * (step_count + 1) stored doubles, about 1 GiB
DEFAULT_MAX_ELEMENTS = 2**27


class SignConvention(enum.Enum):
    MINUS_ONE = -1
    PLUS_ONE = 1

    @classmethod
    def coerce(cls, conv) -> "SignConvention":
        if isinstance(conv, cls):
            return conv
        if isinstance(conv, str):
            key = conv.strip().lower().replace("-", "_")
            aliases = {"minus_one": cls.MINUS_ONE, "-1": cls.MINUS_ONE,
                       "plus_one": cls.PLUS_ONE, "+1": cls.PLUS_ONE, "1": cls.PLUS_ONE}
            if key in aliases:
                return aliases[key]
            raise ValueError(f"unknown sign convention {conv!r}")
        return cls(int(conv))


class MemoryBudgetError(MemoryError):
    def __init__(self, depth: int, step_count: int, cap: int):
        self.product = (depth + 1) * (step_count + 1)
        self.cap = cap
        super().__init__(
            f"(depth+1)*(step_count+1) = {depth + 1}*{step_count + 1} = {self.product} "
            f"exceeds the memory cap of {cap} stored values"
        )


def sign_of(v, conv=SignConvention.MINUS_ONE):
    """+1 for positive, -1 for negative, the convention's value at exactly 0."""
    z = SignConvention.coerce(conv).value
    if np.ndim(v) == 0:
        return 1 if v > 0 else (-1 if v < 0 else z)
    v = np.asarray(v)
    return np.where(v > 0, 1, np.where(v < 0, -1, z)).astype(np.int8)


def levy_transform(path: Path, conv=SignConvention.MINUS_ONE) -> Path:
    signs = sign_of(path.values[:-1], conv)
    return Path(path.grid, signs * path.increments)


@dataclass(eq=False)
class IterateStack:
    """``w^0 = base`` and its first ``depth`` Levy iterates, with sign products.

    ``values[n]`` holds the nodes of ``w^n``; ``sign_products[n]`` holds ``hbar_n``
    (``hbar_0 = 1``).  The arrays are read-only.
    """

    base: Path
    values: np.ndarray
    sign_products: np.ndarray
    conv: SignConvention = SignConvention.MINUS_ONE
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.values.setflags(write=False)
        self.sign_products.setflags(write=False)

    @property
    def depth(self) -> int:
        return self.values.shape[0] - 1

    @property
    def grid(self) -> Grid:
        return self.base.grid

    @property
    def dt(self) -> float:
        return self.base.grid.dt

    def iterate_path(self, n: int) -> Path:
        return Path(self.grid, self.sign_products[n, :-1] * self.base.increments)

    @property
    def iterates(self) -> list:
        return [self.iterate_path(n) for n in range(self.depth + 1)]

    def signs(self, n: int) -> np.ndarray:
        return sign_of(self.values[n], self.conv)

    def zeros(self, n: int) -> "ZeroSet":
        key = ("zeros", n)
        if key not in self._cache:
            self._cache[key] = _zero_set(self.values[n], self.dt)
        return self._cache[key]

    @cached_property
    def markers(self) -> "MarkerTable":
        return MarkerTable.build(self)


def iterate(path: Path, depth: int, conv=SignConvention.MINUS_ONE,
            max_elements: int = DEFAULT_MAX_ELEMENTS) -> IterateStack:
    """Dense stack of ``depth`` iterates of ``path``."""
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    if (depth + 1) * (path.step_count + 1) > max_elements:
        raise MemoryBudgetError(depth, path.step_count, max_elements)
    conv = SignConvention.coerce(conv)
    values, hbar = _kernels.iterate_levels(path.increments, depth, conv.value)
    return IterateStack(path, values, hbar, conv)


def iterate_levels(path: Path, depth: int, conv=SignConvention.MINUS_ONE):
    """Streaming alternative to :func:`iterate`: yield ``(n, values_n, hbar_n)``
    one level at a time without keeping earlier levels."""
    z = SignConvention.coerce(conv).value
    inc = path.increments
    hbar = np.ones(path.step_count + 1, dtype=np.int8)
    values = path.values
    for n in range(depth + 1):
        yield n, values, hbar
        if n == depth:
            break
        s = np.where(values > 0, 1, np.where(values < 0, -1, z)).astype(np.int8)
        hbar = hbar * s
        values = np.empty(path.step_count + 1)
        values[0] = 0.0
        np.cumsum(hbar[:-1] * inc, out=values[1:])


@dataclass(frozen=True, eq=False)
class ZeroSet:
    """Zero markers of one path, sorted by time.

    A marker is either an exact zero at node ``left[q]`` (``frac[q] == 0``,
    ``exact[q]``) or a strict sign change between nodes ``left[q]`` and
    ``left[q] + 1`` located by linear interpolation.
    """

    times: np.ndarray
    left: np.ndarray
    frac: np.ndarray
    exact: np.ndarray

    def __len__(self):
        return self.times.size

    def last_before(self, t: float):
        """Index of the last marker with time <= t, or -1."""
        return int(np.searchsorted(self.times, t, side="right")) - 1


def _zero_set(v: np.ndarray, dt: float) -> ZeroSet:
    exact_idx = np.flatnonzero(v == 0.0)
    a, b = v[:-1], v[1:]
    cross_idx = np.flatnonzero(a * b < 0.0)
    ca = a[cross_idx]
    cfrac = ca / (ca - b[cross_idx])
    left = np.concatenate([exact_idx, cross_idx])
    frac = np.concatenate([np.zeros(exact_idx.size), cfrac])
    exact = np.concatenate([np.ones(exact_idx.size, bool), np.zeros(cross_idx.size, bool)])
    # a crossing (i, i+1) never coincides with an exact zero at i or i+1
    order = np.lexsort((frac, left))
    left, frac, exact = left[order], frac[order], exact[order]
    times = (left + frac) * dt
    return ZeroSet(times, left, frac, exact)


def zeros(path: Path) -> ZeroSet:
    return _zero_set(path.values, path.dt)


@dataclass(frozen=True, eq=False)
class MarkerTable:
    """All zero markers of all levels of a stack, with the distance from 0 of
    the lower levels at each marker.

    ``minabs[q] = min_{k < level[q]} |w^k(times[q])|`` with the lower levels
    linearly interpolated at the marker time; ``inf`` for level 0.
    Rows are grouped by level, then sorted by time.
    """

    level: np.ndarray
    times: np.ndarray
    left: np.ndarray
    frac: np.ndarray
    exact: np.ndarray
    minabs: np.ndarray
    offsets: np.ndarray  # rows of level n are offsets[n]:offsets[n+1]

    @classmethod
    def build(cls, stack: IterateStack) -> "MarkerTable":
        parts = []
        for n in range(stack.depth + 1):
            z = stack.zeros(n)
            if n == 0:
                mins = np.full(len(z), np.inf)
            elif len(z):
                lo = stack.values[:n, z.left]
                hi = stack.values[:n, np.minimum(z.left + 1, stack.grid.step_count)]
                mins = np.min(np.abs(lo + z.frac * (hi - lo)), axis=0)
            else:
                mins = np.empty(0)
            parts.append((np.full(len(z), n), z, mins))
        counts = [len(p[1]) for p in parts]
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return cls(
            level=np.concatenate([p[0] for p in parts]).astype(np.int64),
            times=np.concatenate([p[1].times for p in parts]),
            left=np.concatenate([p[1].left for p in parts]).astype(np.int64),
            frac=np.concatenate([p[1].frac for p in parts]),
            exact=np.concatenate([p[1].exact for p in parts]),
            minabs=np.concatenate([p[2] for p in parts]),
            offsets=offsets,
        )

    def rows(self, n: int) -> slice:
        return slice(int(self.offsets[n]), int(self.offsets[n + 1]))


def local_time_estimate(path: Path, eps: float) -> Path:
    """Occupation estimate ``L_i = dt/(2 eps) * #{k < i : |w_k| < eps}``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    inside = (np.abs(path.values[:-1]) < eps).astype(np.float64)
    return Path(path.grid, inside * (path.dt / (2.0 * eps)))


def discrete_local_time(path: Path, conv=SignConvention.MINUS_ONE) -> np.ndarray:
    """``|w| - T w`` on the nodes; nondecreasing, grows only across zero markers."""
    return np.abs(path.values) - levy_transform(path, conv).values


def local_increment_check(stack: IterateStack, a_idx, lo_idx, hi_idx, n_idx, rel_tol=1e-9):
    """Codes per draw (see ``_kernels.local_increment_draws``): -1 hypothesis fails,
    0 conclusions hold, 1 zero found, 2 increment identity broken."""
    args = [np.ascontiguousarray(x, dtype=np.int64) for x in (a_idx, lo_idx, hi_idx, n_idx)]
    if np.any(args[3] > stack.depth) or np.any(args[3] < 1):
        raise ValueError("levels must lie in [1, depth]")
    if np.any(args[1] > args[0]) or np.any(args[0] > args[2]):
        raise ValueError("need lo <= a <= hi")
    return _kernels.local_increment_draws(stack.values, stack.sign_products, stack.base.increments,
                                 *args, rel_tol)
