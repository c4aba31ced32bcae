"""Grid-based Brownian paths, reproducible path generation and path symmetries.

A path is stored through its increments; ``values`` is the running sum of the
increments starting from 0.  Keeping the increments as the primary data makes
the symmetries used throughout the package exact in floating point:

* reflection after an index negates a suffix of the increments, so applying it
  twice returns the original bits;
* scaling by a power of two only rescales the exponent of every increment.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "Path",
    "RngStream",
    "IncrementModel",
    "OffGridError",
    "generate_increments",
    "generate_path",
    "coarsen",
    "scale_path",
    "reflect_after",
    "sup_deviation",
]

_ON_GRID_RTOL = 1e-9


class OffGridError(ValueError):
    """A requested time does not fall on a grid node."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_i = i * dt`` for ``0 <= i <= step_count``."""

    step_count: int
    dt: float

    def __post_init__(self):
        if int(self.step_count) != self.step_count or self.step_count < 1:
            raise ValueError(f"step_count must be a positive integer, got {self.step_count!r}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive and finite, got {self.dt!r}")
        object.__setattr__(self, "step_count", int(self.step_count))
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def horizon(self) -> float:
        return self.step_count * self.dt

    def time(self, i):
        return i * self.dt

    def times(self) -> np.ndarray:
        return np.arange(self.step_count + 1) * self.dt

    def index_of(self, t: float, name: str = "t") -> int:
        """Grid index of time ``t``; raises :class:`OffGridError` when ``t`` is not a node."""
        q = t / self.dt
        j = round(q)
        if abs(q - j) > _ON_GRID_RTOL * max(1.0, abs(q)):
            raise OffGridError(f"{name}={t!r} is not a multiple of dt={self.dt!r}")
        if not 0 <= j <= self.step_count:
            raise OffGridError(f"{name}={t!r} lies outside [0, {self.horizon!r}]")
        return int(j)

    def on_grid(self, t: float) -> bool:
        try:
            self.index_of(t)
        except OffGridError:
            return False
        return True


@dataclass(frozen=True, eq=False)
class Path:
    """A real trajectory on a uniform grid, started at 0.

    ``increments[i]`` is ``values[i+1] - values[i]``; ``values`` is computed once
    as the sequential running sum of the increments.
    """

    grid: Grid
    increments: np.ndarray
    values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        inc = np.ascontiguousarray(self.increments, dtype=np.float64)
        if inc.shape != (self.grid.step_count,):
            raise ValueError(
                f"expected {self.grid.step_count} increments, got shape {inc.shape}"
            )
        if not np.all(np.isfinite(inc)):
            raise ValueError("path increments must be finite")
        inc.setflags(write=False)
        values = np.empty(inc.size + 1)
        values[0] = 0.0
        np.cumsum(inc, out=values[1:])
        values.setflags(write=False)
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values, dt: float) -> "Path":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("a path needs at least two values")
        if values[0] != 0.0:
            raise ValueError("paths start at the origin (values[0] must be 0)")
        return cls(Grid(values.size - 1, dt), np.diff(values))

    @property
    def step_count(self) -> int:
        return self.grid.step_count

    @property
    def dt(self) -> float:
        return self.grid.dt

    def at(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])

    def same_as(self, other: "Path") -> bool:
        """Bit-exact equality of grids and increments."""
        return (
            self.grid == other.grid
            and self.increments.shape == other.increments.shape
            and bool(np.all(self.increments.view(np.uint64) == other.increments.view(np.uint64)))
        )

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class RngStream:
    """One reproducible random stream per path.

    The stream is a Philox counter-based generator keyed on
    ``(master_seed, stream_index)``; the counter starts at zero, so the draws of
    a stream never depend on which other streams were consumed or in what order.
    """

    master_seed: int
    stream_index: int

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        if not 0 <= self.stream_index < 2**64:
            raise ValueError("stream_index must be a nonnegative 64-bit integer")

    def bit_generator(self) -> np.random.Philox:
        key = np.array([self.master_seed, self.stream_index], dtype=np.uint64)
        return np.random.Philox(key=key)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(self.bit_generator())


class IncrementModel(str, enum.Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"


def generate_increments(grid: Grid, model, rng: RngStream) -> np.ndarray:
    model = IncrementModel(model)
    sd = math.sqrt(grid.dt)
    if model is IncrementModel.GAUSSIAN:
        return rng.generator().standard_normal(grid.step_count) * sd
    # one raw 64-bit word per step: the sign of step i is the top bit of word i
    raw = rng.bit_generator().random_raw(grid.step_count)
    return np.where(raw >> np.uint64(63), sd, -sd)


def generate_path(grid: Grid, model, rng: RngStream) -> Path:
    return Path(grid, generate_increments(grid, model, rng))


def coarsen(path: Path, factor: int) -> Path:
    """Subsample every ``factor``-th node of ``path`` (same trajectory, coarser grid)."""
    m = path.step_count
    if factor < 1 or m % factor:
        raise ValueError(f"step_count {m} is not divisible by {factor}")
    inc = path.increments.reshape(m // factor, factor).sum(axis=1)
    return Path(Grid(m // factor, path.dt * factor), inc)


def scale_path(path: Path, x: float) -> Path:
    """Brownian scaling ``t -> x**-1 * w(x**2 t)``.

    Node ``j`` of the result sits at time ``j * dt / x**2`` and carries the source
    value at node ``j`` divided by ``x``, so no interpolation is ever needed.
    For powers of two the result is exact unless increments underflow.
    """
    x = float(x)
    if not (math.isfinite(x) and x > 0):
        raise ValueError(f"scaling factor must be positive and finite, got {x!r}")
    dt = path.dt / (x * x)
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError(f"scaling by {x!r} leaves no representable grid")
    return Path(Grid(path.step_count, dt), path.increments / x)


def reflect_after(path: Path, tau_index: int) -> Path:
    """``(S w)_t = 2 w_{t ^ tau} - w_t`` with ``tau`` a grid index."""
    if not 0 <= tau_index <= path.step_count:
        raise IndexError(f"tau_index {tau_index} outside [0, {path.step_count}]")
    inc = path.increments.copy()
    inc[tau_index:] *= -1.0
    return Path(path.grid, inc)


def sup_deviation(path: Path, from_index: int, to_index: int) -> float:
    """``max_{i <= k <= j} |w_k - w_i|``."""
    if not 0 <= from_index <= to_index <= path.step_count:
        raise IndexError(f"bad index range [{from_index}, {to_index}]")
    seg = path.values[from_index : to_index + 1]
    return float(np.max(np.abs(seg - seg[0])))
