"""Integral-type path transforms ``T w = int_0^. h(s, w) dw_s`` with orthogonal
``h`` and the mixing functional ``X_n(t) = int_0^t hbar_n(s) ds``.

The scalar Levy transform is the instance ``d = 1``, ``h = sign(w)``; the engine
agrees with :mod:`levylab.levy` bit for bit on that case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .levy import IterateStack, SignConvention, sign_of
from .paths import Grid, Path
from .stats import EstimatorAccumulator

__all__ = [
    "MAX_DIMENSION",
    "NonOrthogonalError",
    "VectorPath",
    "OrthogonalField",
    "ConstantField",
    "LevyField",
    "RotationField",
    "FieldStack",
    "MatrixPath",
    "apply_transform",
    "composed_field",
    "iterate_field",
    "xn_process",
    "xn_squared_identity_check",
    "ergodic_average",
    "mixing_statistic",
    "FunctionalEstimate",
]

MAX_DIMENSION = 8
ORTHO_TOL = 1e-12


class NonOrthogonalError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class VectorPath:
    """``d``-dimensional trajectory on a grid, stored through its increments."""

    grid: Grid
    increments: np.ndarray  # (step_count, d)
    values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        inc = np.ascontiguousarray(self.increments, dtype=np.float64)
        if inc.ndim == 1:
            inc = inc[:, None]
        if inc.shape[0] != self.grid.step_count or inc.ndim != 2:
            raise ValueError(f"expected ({self.grid.step_count}, d) increments, got {inc.shape}")
        if not 1 <= inc.shape[1] <= MAX_DIMENSION:
            raise ValueError(f"dimension must lie in [1, {MAX_DIMENSION}]")
        values = np.zeros((inc.shape[0] + 1, inc.shape[1]))
        np.cumsum(inc, axis=0, out=values[1:])
        inc.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.increments.shape[1]

    @classmethod
    def from_path(cls, path: Path) -> "VectorPath":
        return cls(path.grid, path.increments[:, None])

    def to_path(self) -> Path:
        if self.dim != 1:
            raise ValueError("only one-dimensional paths convert to Path")
        return Path(self.grid, self.increments[:, 0])


class OrthogonalField:
    """Evaluator ``(i, prefix) -> d x d`` orthogonal matrix.

    ``prefix`` holds the path nodes ``0..i``.  Subclasses may override
    :meth:`matrices` with a vectorized version; the default calls :meth:`matrix`
    once per node.  ``progressive`` declares that only the prefix is used.
    """

    dim: int = 1
    progressive: bool = True

    def matrix(self, i: int, prefix: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def matrices(self, values: np.ndarray) -> np.ndarray:
        """Matrices at every node, shape ``(len(values), d, d)``."""
        return np.stack([self.matrix(i, values[: i + 1]) for i in range(values.shape[0])])


@dataclass
class ConstantField(OrthogonalField):
    mat: np.ndarray

    def __post_init__(self):
        self.mat = np.atleast_2d(np.asarray(self.mat, dtype=np.float64))
        self.dim = self.mat.shape[0]

    @classmethod
    def identity(cls, d: int = 1) -> "ConstantField":
        return cls(np.eye(d))

    @classmethod
    def negation(cls, d: int = 1) -> "ConstantField":
        return cls(-np.eye(d))

    def matrix(self, i, prefix):
        return self.mat

    def matrices(self, values):
        return np.broadcast_to(self.mat, (values.shape[0], self.dim, self.dim)).copy()


@dataclass
class LevyField(OrthogonalField):
    """``h = sign(w)`` in one dimension."""

    conv: SignConvention = SignConvention.MINUS_ONE

    def matrix(self, i, prefix):
        return np.array([[float(sign_of(prefix[i, 0], self.conv))]])

    def matrices(self, values):
        return sign_of(values[:, 0], self.conv).astype(np.float64)[:, None, None]


@dataclass
class RotationField(OrthogonalField):
    """Planar rotation by ``omega * w1`` (a smooth two-dimensional example)."""

    omega: float = 1.0
    dim: int = 2

    def matrix(self, i, prefix):
        a = self.omega * prefix[i, 0]
        c, s = math.cos(a), math.sin(a)
        return np.array([[c, -s], [s, c]])

    def matrices(self, values):
        a = self.omega * values[:, 0]
        c, s = np.cos(a), np.sin(a)
        return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def _check_orthogonal(h: np.ndarray, tol: float = ORTHO_TOL):
    d = h.shape[-1]
    err = np.abs(np.swapaxes(h, -1, -2) @ h - np.eye(d))
    worst = float(err.max()) if err.size else 0.0
    if worst > tol:
        raise NonOrthogonalError(f"|h^T h - I| reaches {worst:.3e} > {tol:g}")


def _as_vector(path) -> VectorPath:
    return VectorPath.from_path(path) if isinstance(path, Path) else path


def apply_transform(path, fld: OrthogonalField, check: bool = False):
    """Left-point transform; returns the same kind of path it was given."""
    vp = _as_vector(path)
    if fld.dim != vp.dim:
        raise ValueError(f"field dimension {fld.dim} does not match path dimension {vp.dim}")
    h = fld.matrices(vp.values)[:-1]
    if check:
        _check_orthogonal(h)
    if vp.dim == 1:
        inc = h[:, 0, 0] * vp.increments[:, 0]
    else:
        inc = np.einsum("ijk,ik->ij", h, vp.increments)
    out = VectorPath(vp.grid, inc)
    return out.to_path() if isinstance(path, Path) else out


def composed_field(level_matrices, n: int) -> np.ndarray:
    """``hbar_n = H_{n-1} ... H_1 H_0`` node by node, from per-level matrices
    ``level_matrices[k]`` of shape ``(nodes, d, d)``.  ``n = 0`` gives the identity."""
    if n > len(level_matrices):
        raise ValueError(f"need {n} levels, got {len(level_matrices)}")
    nodes, d, _ = np.shape(level_matrices[0])
    out = np.broadcast_to(np.eye(d), (nodes, d, d)).copy()
    for k in range(n):
        out = level_matrices[k] @ out
    return out


@dataclass(eq=False)
class FieldStack:
    """Iterates of a general transform and the composed matrices ``hbar_n`` at every node."""

    paths: list
    sign_products: np.ndarray  # (depth + 1, nodes, d, d)

    @property
    def depth(self) -> int:
        return len(self.paths) - 1

    @property
    def grid(self) -> Grid:
        return self.paths[0].grid

    @property
    def dim(self) -> int:
        return self.sign_products.shape[-1]


def iterate_field(path, fld: OrthogonalField, depth: int, check: bool = False) -> FieldStack:
    vp = _as_vector(path)
    paths = [vp]
    hbar = [np.broadcast_to(np.eye(vp.dim), (vp.grid.step_count + 1, vp.dim, vp.dim)).copy()]
    for _ in range(depth):
        h = fld.matrices(paths[-1].values)
        if check:
            _check_orthogonal(h)
        hbar.append(h @ hbar[-1])
        if vp.dim == 1:
            inc = h[:-1, 0, 0] * paths[-1].increments[:, 0]
        else:
            inc = np.einsum("ijk,ik->ij", h[:-1], paths[-1].increments)
        paths.append(VectorPath(vp.grid, inc))
    return FieldStack(paths, np.stack(hbar))


@dataclass(frozen=True, eq=False)
class MatrixPath:
    grid: Grid
    values: np.ndarray  # (nodes, d, d)

    def hs_norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values**2, axis=(-2, -1)))

    def at(self, t: float) -> np.ndarray:
        return self.values[self.grid.index_of(t)]


def _level(stack, n: int) -> np.ndarray:
    """``hbar_n`` at every node as a ``(nodes, d, d)`` float array."""
    if not 0 <= n <= stack.depth:
        raise ValueError(f"level {n} outside [0, {stack.depth}]")
    if isinstance(stack, IterateStack):
        return stack.sign_products[n].astype(np.float64)[:, None, None]
    return stack.sign_products[n]


def xn_process(stack, n: int) -> MatrixPath:
    """Left Riemann sum of ``hbar_n``; node ``i`` holds ``dt * sum_{j<i} hbar_n(t_j)``.

    Summing before multiplying by ``dt`` keeps the scalar case exact
    (``X_0(t_i) = t_i`` bit for bit).
    """
    h = _level(stack, n)
    vals = np.zeros_like(h)
    np.cumsum(h[:-1], axis=0, out=vals[1:])
    vals *= stack.grid.dt
    return MatrixPath(stack.grid, vals)


def xn_squared_identity_check(stack, n: int, t: float) -> float:
    """``X_n(t)^2 - (2 sum_{u<v} h_u h_v + sum_u h_u^2) dt^2`` in one dimension.

    The double sum is accumulated through running prefix sums, independently of
    the square of the total.
    """
    h = _level(stack, n)
    if h.shape[-1] != 1:
        raise ValueError("the squared identity is scalar")
    h = h[:, 0, 0]
    i = stack.grid.index_of(t, "t")
    dt = stack.grid.dt
    x = xn_process(stack, n).values[i, 0, 0]
    hh = h[:i]
    before = np.concatenate([[0.0], np.cumsum(hh)[:-1]])
    cross = 2.0 * float(np.dot(hh, before))
    diag = float(np.dot(hh, hh))
    return float(x * x - (cross + diag) * dt * dt)


@dataclass(frozen=True)
class FunctionalEstimate:
    estimate: float
    se: float
    count: int
    per_level: tuple = ()
    per_level_se: tuple = ()
    non_ergodic: bool = False


def mixing_statistic(stacks: Iterable, n: int, t: float, power: int = 1) -> FunctionalEstimate:
    """Monte Carlo ``E ||X_n(t)||_HS ** power`` over independent stacks."""
    acc = EstimatorAccumulator()
    for st in stacks:
        v = float(xn_process(st, n).hs_norm()[st.grid.index_of(t, "t")])
        acc.add(v**power)
    return FunctionalEstimate(acc.mean, acc.se, acc.count)


def ergodic_average(stacks: Iterable, N: int, t: float) -> FunctionalEstimate:
    """Monte Carlo ``E[(1/N) sum_{n=1..N} ||X_n(t)||_HS^2]``.

    Flags the non-ergodic signature when every path attains the maximum
    ``t^2 d`` at every level.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    acc = EstimatorAccumulator()
    levels = [EstimatorAccumulator() for _ in range(N)]
    saturated = True
    top = None
    for st in stacks:
        i = st.grid.index_of(t, "t")
        vals = []
        for n in range(1, N + 1):
            x = xn_process(st, n)
            sq = float(np.sum(x.values[i] ** 2))
            levels[n - 1].add(sq)
            vals.append(sq)
        d = 1 if isinstance(st, IterateStack) else st.dim
        top = i * st.grid.dt * i * st.grid.dt * d
        saturated &= all(v >= top * (1 - 1e-12) for v in vals)
        acc.add(sum(vals) / N)
    return FunctionalEstimate(
        acc.mean, acc.se, acc.count,
        tuple(a.mean for a in levels), tuple(a.se for a in levels),
        non_ergodic=bool(saturated and top is not None and top > 0),
    )
