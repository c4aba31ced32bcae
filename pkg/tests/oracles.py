"""Independent reference values and slow reference implementations.

Nothing here imports the package; every value is derived another way.
"""

import math

import numpy as np
from scipy import integrate, stats

# frozen reference values, each reproduced by a function below
ARCSINE = {0.25: 1.0 / 3.0, 0.5: 0.5, 0.75: 2.0 / 3.0}
EX1_SQUARED = 0.5
HALF_NORMAL_MEAN = math.sqrt(2.0 / math.pi)
SUP_ABS_GT_2 = 0.0910


def sign_correlation(rho: float) -> float:
    """``E[sgn X sgn Y]`` for a standard bivariate normal, via the orthant probability."""
    mvn = stats.multivariate_normal(mean=[0.0, 0.0], cov=[[1.0, rho], [rho, 1.0]])
    p_pos = mvn.cdf([0.0, 0.0])  # P(X < 0, Y < 0) = P(X > 0, Y > 0)
    return 4.0 * p_pos - 1.0


def ex1_squared() -> float:
    """``2 * int_{0<u<v<1} E[sgn B_u sgn B_v] du dv`` by numerical quadrature."""
    f = lambda u, v: 2.0 * (2.0 / math.pi) * math.asin(math.sqrt(u / v))
    val, _ = integrate.dblquad(f, 0.0, 1.0, lambda v: 0.0, lambda v: v, epsabs=1e-11)
    return val


def half_normal_mean() -> float:
    val, _ = integrate.quad(lambda x: x * 2.0 * stats.norm.pdf(x), 0.0, np.inf)
    return val


def sup_abs_exceeds(a: float, T: float = 1.0, terms: int = 60) -> float:
    """``P(sup_{[0,T]} |B| > a)`` from the eigenfunction series of the exit time."""
    s = sum((-1) ** k / (2 * k + 1) * math.exp(-((2 * k + 1) ** 2) * math.pi**2 * T / (8 * a * a))
            for k in range(terms))
    return 1.0 - 4.0 / math.pi * s


def sup_abs_exceeds_images(a: float) -> float:
    """The two leading image terms ``4 Phi(-a) - 4 Phi(-3a)``."""
    return 4.0 * stats.norm.sf(a) - 4.0 * stats.norm.sf(3.0 * a)


# ---------------------------------------------------------------- slow references

def ref_sign(v, zero=-1):
    return 1 if v > 0 else (-1 if v < 0 else zero)


def ref_transform(values, zero=-1):
    out = [0.0]
    for i in range(len(values) - 1):
        out.append(out[-1] + ref_sign(values[i], zero) * (values[i + 1] - values[i]))
    return out


def ref_zero_times(values, dt):
    """Exact zeros and interpolated strict sign changes, sorted."""
    out = []
    for i, v in enumerate(values):
        if v == 0.0:
            out.append(i * dt)
        if i + 1 < len(values) and v * values[i + 1] < 0:
            out.append((i + v / (v - values[i + 1])) * dt)
    return sorted(out)


def ref_good_time(levels, dt, t_index, C, s):
    """Flavor-A membership straight from the iterate values (list of arrays)."""
    t = t_index * dt
    for n, v in enumerate(levels):
        for i in range(len(v)):
            cands = []
            if v[i] == 0.0:
                cands.append((i, 0.0))
            if i + 1 < len(v) and v[i] * v[i + 1] < 0:
                cands.append((i, v[i] / (v[i] - v[i + 1])))
            for left, frac in cands:
                g = (left + frac) * dt
                if not (s * t < g < t):
                    continue
                if n == 0:
                    return True
                lo = min(abs(levels[k][left] + frac * (levels[k][min(left + 1, len(v) - 1)] - levels[k][left]))
                         for k in range(n))
                if lo > C * math.sqrt(t - g):
                    return True
    return False
