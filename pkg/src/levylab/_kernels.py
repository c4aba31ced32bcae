"""Compiled inner loops.  Every kernel mirrors a plain-numpy definition elsewhere
in the package and is tested bit-for-bit against it."""

import math

import numba as nb
import numpy as np


@nb.njit(cache=True, nogil=True)
def iterate_levels(inc, depth, sign_at_zero):
    """Values and sign products of the first ``depth`` iterates.

    Level ``n`` increments are ``hbar[n, i] * inc[i]``; values are the sequential
    running sums, so the result equals repeated ``np.cumsum`` bit for bit.
    """
    m = inc.shape[0]
    values = np.empty((depth + 1, m + 1))
    hbar = np.empty((depth + 1, m + 1), dtype=np.int8)
    for i in range(m + 1):
        hbar[0, i] = 1
    values[0, 0] = 0.0
    for i in range(m):
        values[0, i + 1] = values[0, i] + inc[i]
    for n in range(1, depth + 1):
        prev = values[n - 1]
        for i in range(m + 1):
            v = prev[i]
            if v > 0.0:
                s = 1
            elif v < 0.0:
                s = -1
            else:
                s = sign_at_zero
            hbar[n, i] = hbar[n - 1, i] * s
        values[n, 0] = 0.0
        for i in range(m):
            values[n, i + 1] = values[n, i] + hbar[n, i] * inc[i]
    return values, hbar


@nb.njit(cache=True, nogil=True)
def mark_good_times(times, minabs, dt, C, s, j_lo, j_hi, out):
    """Flag grid nodes ``j in [j_lo, j_hi]`` covered by some zero marker.

    Node ``t = j*dt`` is covered by marker ``(g, m)`` when ``s*t < g < t`` and
    ``m > C*sqrt(t - g)``.  Both conditions fail monotonically as ``t`` grows,
    so each marker is scanned forward until the first failure.
    """
    for q in range(times.shape[0]):
        g = times[q]
        mq = minabs[q]
        j = int(g / dt) + 1
        while j * dt <= g:
            j += 1
        while j - 1 >= 0 and (j - 1) * dt > g:
            j -= 1
        if j < j_lo:
            j = j_lo
        while j <= j_hi:
            t = j * dt
            if not (s * t < g):
                break
            if not (mq > C * math.sqrt(t - g)):
                break
            out[j - j_lo] = True
            j += 1


@nb.njit(cache=True, nogil=True)
def local_increment_draws(values, hbar, inc, a_idx, lo_idx, hi_idx, n_idx, rel_tol):
    """Check the local-increment lemma on a batch of (interval, level) draws.

    Returns per draw: -1 when the strict-margin hypothesis fails, 0 when the
    conclusions hold, 1 when an iterate below ``n`` has a zero in the interval,
    2 when the increment identity fails.
    """
    out = np.empty(a_idx.shape[0], dtype=np.int8)
    for d in range(a_idx.shape[0]):
        a = a_idx[d]
        lo = lo_idx[d]
        hi = hi_idx[d]
        n = n_idx[d]
        sup = 0.0
        for t in range(lo, hi + 1):
            dev = abs(values[0, t] - values[0, a])
            if dev > sup:
                sup = dev
        lowest = np.inf
        for k in range(n):
            v = abs(values[k, a])
            if v < lowest:
                lowest = v
        step = 0.0
        for t in range(lo, hi):
            if abs(inc[t]) > step:
                step = abs(inc[t])
        if not (sup < lowest and lowest - sup > step):
            out[d] = -1
            continue
        code = 0
        for k in range(n):
            for t in range(lo, hi + 1):
                if values[k, t] == 0.0:
                    code = 1
                if t < hi and values[k, t] * values[k, t + 1] < 0.0:
                    code = 1
        if code == 0:
            for k in range(n + 1):
                h = hbar[k, a]
                for t in range(lo, hi + 1):
                    lhs = values[k, t] - values[k, a]
                    rhs = h * (values[0, t] - values[0, a])
                    scale = abs(values[k, t]) + abs(values[k, a]) + abs(values[0, t]) + abs(values[0, a])
                    if abs(lhs - rhs) > rel_tol * (scale + 1e-300):
                        code = 2
                    if t < hi and hbar[k, t] != h:
                        code = 2
        out[d] = code
    return out
