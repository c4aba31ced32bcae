"""Exact invariants that must hold on any build, checked in a few seconds."""

from __future__ import annotations

import itertools

import numpy as np

from .integral import xn_squared_identity_check
from .levy import SignConvention, iterate, levy_transform
from .paths import Grid, Path, RngStream, generate_path, reflect_after, scale_path

__all__ = ["bijection_check", "run_self_check"]


def _codes(inc: np.ndarray) -> int:
    bits = (inc > 0).astype(np.int64)
    return int(bits @ (1 << np.arange(inc.size, dtype=np.int64)))


def bijection_check(m: int, conv=SignConvention.MINUS_ONE) -> tuple:
    """Apply the transform to all ``2**m`` walks with unit steps.

    Returns ``(collisions, misses)``; both are zero for a permutation.
    """
    grid = Grid(m, 1.0)
    seen = np.zeros(1 << m, dtype=np.int64)
    for bits in range(1 << m):
        inc = np.where((bits >> np.arange(m)) & 1, 1.0, -1.0)
        seen[_codes(levy_transform(Path(grid, inc), conv).increments)] += 1
    return int(np.sum(seen > 1)), int(np.sum(seen == 0))


def run_self_check(seed: int = 20240101, paths: int = 64) -> dict:
    """Name -> (passed, detail)."""
    out = {}
    bad = []
    for m, conv in itertools.product(range(4, 13), SignConvention):
        col, miss = bijection_check(m, conv)
        if col or miss:
            bad.append((m, conv.name, col, miss))
    out["bijection m=4..12"] = (not bad, f"failures {bad}" if bad else "all permutations")

    grid = Grid(512, 2.0**-9)
    inv = eq = ident = 0
    for i in range(paths):
        p = generate_path(grid, "gaussian", RngStream(seed, i))
        k = int(RngStream(seed, i).generator().integers(0, grid.step_count + 1))
        inv += not reflect_after(reflect_after(p, k), k).same_as(p)
        for x in (2.0, 0.5):
            eq += not levy_transform(scale_path(p, x)).same_as(scale_path(levy_transform(p), x))
        st = iterate(p, 4)
        ident += max(abs(xn_squared_identity_check(st, n, 1.0)) for n in range(5)) > 1e-10
    out["reflection involution"] = (inv == 0, f"{inv} mismatches over {paths} paths")
    out["scaling equivariance"] = (eq == 0, f"{eq} mismatches over {2 * paths} cases")
    out["X_n squared identity"] = (ident == 0, f"{ident} stacks above 1e-10")
    return out
