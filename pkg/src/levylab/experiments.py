"""Sign-product correlations, the reflection coupling, good-time sets and their
porosity near t = 1.

Good times.  For ``C > 0`` and ``0 < s < 1`` a time ``t`` is good (flavor
``A``) when some level ``n >= 0`` has a zero marker ``g`` with ``s t < g < t``
and ``min_{k<n} |w^k_g| > C sqrt(t - g)`` (no condition when ``n = 0``).
Flavor ``tildeA`` only looks at ``n >= 1`` and at ``g = gamma_n(t)`` when this last
zero is at least every ``gamma_k(t)``, ``k < n``.  Flavor ``dtildeA`` also asks
``max_{u in [g, t]} |w_u - w_g| < L sqrt(t - g)``.  Lower levels are linearly
interpolated at ``g``.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .levy import IterateStack, iterate
from .paths import Path, reflect_after, scale_path
from .stats import EstimatorAccumulator, Interval, median_interval, two_proportion_z, wilson_interval

__all__ = [
    "Flavor",
    "eps_products",
    "correlation_hn",
    "TauResult",
    "find_tau",
    "CouplingOutcome",
    "coupling_probe",
    "CouplingRow",
    "coupling_table",
    "MembershipRecord",
    "membership",
    "verify_witness",
    "good_time_mask",
    "porosity_runs",
    "PorosityRow",
    "porosity_probe",
    "InvarianceTable",
    "t_invariance_check",
    "txa_check",
    "phi_coefficient",
    "CrosscheckTable",
    "xy_event_crosscheck",
]


class Flavor(str, enum.Enum):
    A = "A"
    TILDE_A = "tildeA"
    DTILDE_A = "dtildeA"


# ---------------------------------------------------------------- correlations

def eps_products(stack: IterateStack, s: float, t: float = 1.0) -> np.ndarray:
    """``hbar_n(s) * hbar_n(t)`` for ``n = 0..depth`` (exactly +-1)."""
    i = stack.grid.index_of(s, "s")
    j = stack.grid.index_of(t, "t")
    return stack.sign_products[:, i].astype(np.int64) * stack.sign_products[:, j]


def correlation_hn(stacks, n: int, s: float, t: float = 1.0):
    """Monte Carlo ``E[hbar_n(s) hbar_n(t)]``; returns ``(mean, se, count)``."""
    if not s < t:
        raise ValueError("need s < t")
    acc = EstimatorAccumulator()
    for st in stacks:
        if n > st.depth:
            raise ValueError(f"level {n} exceeds depth {st.depth}")
        acc.add(float(eps_products(st, s, t)[n]))
    return acc.mean, acc.se, acc.count


# ---------------------------------------------------------------- coupling

@dataclass(frozen=True)
class TauResult:
    found: bool
    tau: float = math.nan
    nu: int = -1
    row: int = -1  # marker-table row of the witness
    index: int = -1  # grid index where the reflection starts
    residual: float = math.nan  # index * dt - tau


def find_tau(stack: IterateStack, C: float, s: float) -> TauResult:
    """Earliest zero marker ``g`` of any level ``n`` with ``s < g < 1`` and
    ``min_{k<n} |w^k_g| > 2C sqrt(1 - g)``."""
    stack.grid.index_of(s, "s")
    stack.grid.index_of(1.0, "horizon")
    mt = stack.markers
    ok = (mt.times > s) & (mt.times < 1.0) & (mt.minabs > 2.0 * C * np.sqrt(np.maximum(1.0 - mt.times, 0.0)))
    if not ok.any():
        return TauResult(False)
    cand = np.flatnonzero(ok)
    # earliest time; ties go to the lowest level, which comes first in the table
    q = int(cand[np.argmin(mt.times[cand])])
    idx = int(mt.left[q]) + (0 if mt.exact[q] else 1)
    tau = float(mt.times[q])
    return TauResult(True, tau, int(mt.level[q]), q, idx, idx * stack.dt - tau)


@dataclass(frozen=True, eq=False)
class CouplingOutcome:
    tau: TauResult
    in_ac: bool = False  # sup deviation on [tau, 1] <= C sqrt(1 - tau)
    margin: float = math.nan  # min_{k<nu} |w^k_r| - sup_{[r,1]} |w - w_r|
    step: float = math.nan  # largest |increment| on [r, 1]
    eps: np.ndarray = None  # original, levels 0..depth
    eps_reflected: np.ndarray = None
    prefix_identical: bool = True  # iterates agree bit for bit on [0, r]
    lower_signs_kept: bool = True  # sign(w^k_1) unchanged for k < nu
    mirrored: bool = True  # level nu increments exactly negated on [r, 1]

    @property
    def resolved(self) -> bool:
        """The discrete margin exceeds one grid increment."""
        return bool(self.margin > self.step)

    def flip_violations(self) -> np.ndarray:
        """Per level, True where ``n > nu`` and the product did not change sign."""
        out = np.zeros(self.eps.size, dtype=bool)
        if self.tau.found and self.in_ac:
            n = np.arange(self.eps.size)
            out = (n > self.tau.nu) & (self.eps_reflected != -self.eps)
        return out


def coupling_probe(stack: IterateStack, C: float, s: float) -> CouplingOutcome:
    """Reflect the base path after the stopping time and compare sign products."""
    eps = eps_products(stack, s, 1.0)
    tr = find_tau(stack, C, s)
    if not tr.found:
        return CouplingOutcome(tr, eps=eps, eps_reflected=eps.copy())
    j1 = stack.grid.index_of(1.0)
    r = tr.index
    base = stack.base
    seg = base.values[r : j1 + 1]
    sup = float(np.max(np.abs(seg - seg[0])))
    in_ac = sup <= C * math.sqrt(1.0 - tr.tau)
    lowest = float(np.min(np.abs(stack.values[: tr.nu, r]))) if tr.nu > 0 else math.inf
    step = float(np.max(np.abs(base.increments[r:j1]))) if j1 > r else 0.0
    refl = iterate(reflect_after(base, r), stack.depth, stack.conv)
    eps_r = eps_products(refl, s, 1.0)
    prefix = bool(np.all(refl.values[:, : r + 1].view(np.uint64) == stack.values[:, : r + 1].view(np.uint64)))
    kept = bool(np.all(np.sign(refl.values[: tr.nu, j1]) == np.sign(stack.values[: tr.nu, j1])))
    inc_o = stack.sign_products[tr.nu, r:j1] * base.increments[r:j1]
    inc_r = refl.sign_products[tr.nu, r:j1] * refl.base.increments[r:j1]
    mirrored = bool(np.all(inc_r == -inc_o))
    return CouplingOutcome(tr, in_ac, lowest - sup, step, eps, eps_r, prefix, kept, mirrored)


@dataclass(frozen=True)
class CouplingRow:
    n: int
    paths: int
    mean_eps: float
    se_eps: float
    on_event: int  # paths in A_C with n > nu
    violations: int  # among them, resolved margin and no sign flip
    discretization_events: int  # unresolved margin and no sign flip
    sup_prob: float  # P(sup_{[0,1]} |w| > C)
    sup_se: float
    bound_holds: bool


def coupling_table(outcomes, sup_exceeds, n_list) -> list:
    """Reduce per-path outcomes in order.  ``sup_exceeds[p]`` says whether path
    ``p`` leaves ``[-C, C]`` on ``[0, 1]``."""
    outcomes = list(outcomes)
    sup = EstimatorAccumulator().add(np.asarray(sup_exceeds, dtype=np.float64))
    rows = []
    for n in n_list:
        acc = EstimatorAccumulator()
        on = viol = disc = 0
        for o in outcomes:
            acc.add(float(o.eps[n]))
            if o.tau.found and o.in_ac and n > o.tau.nu:
                on += 1
                if o.eps_reflected[n] != -o.eps[n]:
                    if o.resolved:
                        viol += 1
                    else:
                        disc += 1
        bound = abs(acc.mean) <= sup.mean + 3.0 * math.hypot(acc.se, sup.se)
        rows.append(CouplingRow(int(n), acc.count, acc.mean, acc.se, on, viol, disc,
                                sup.mean, sup.se, bool(bound)))
    return rows


# ---------------------------------------------------------------- good times

@dataclass(frozen=True)
class MembershipRecord:
    t: float
    flavor: Flavor
    C: float
    s: float
    L: float
    member: bool
    level: int = -1
    gamma: float = math.nan
    left: int = -1
    exact: bool = False


def _interp(v: np.ndarray, left: int, frac: float) -> np.ndarray:
    if frac == 0.0:
        return v[..., left]
    return v[..., left] + frac * (v[..., left + 1] - v[..., left])


def _fluctuation(stack: IterateStack, left: int, frac: float, j: int) -> float:
    """``max_{u in [g, t_j]} |w_u - w_g|`` over the nodes after ``g``."""
    b = stack.values[0]
    bg = _interp(b, left, frac)
    first = left + 1 if frac > 0 else left
    if first > j:
        return 0.0
    return float(np.max(np.abs(b[first : j + 1] - bg)))


def membership(stack: IterateStack, t: float, flavor=Flavor.A, C: float = 1.0,
               s: float = 0.5, L: float = 1.0) -> MembershipRecord:
    """Scan levels upward and, within a level, zero markers from the latest back."""
    flavor = Flavor(flavor)
    j = stack.grid.index_of(t, "t")
    t = j * stack.dt
    mt = stack.markers
    lo_level = 0 if flavor is Flavor.A else 1
    if flavor is not Flavor.A:
        last = np.full(stack.depth + 1, -1, dtype=np.int64)
        for n in range(stack.depth + 1):
            rows = mt.rows(n)
            q = int(np.searchsorted(mt.times[rows], t, side="right")) - 1
            if q >= 0:
                last[n] = rows.start + q
    for n in range(lo_level, stack.depth + 1):
        rows = mt.rows(n)
        if flavor is Flavor.A:
            cands = range(rows.stop - 1, rows.start - 1, -1)
        else:
            q = last[n]
            if q < 0:
                continue
            g = mt.times[q]
            if any(last[k] >= 0 and mt.times[last[k]] > g for k in range(n)):
                continue
            cands = (q,)
        for q in cands:
            g = float(mt.times[q])
            if not g < t:
                continue
            if not s * t < g:
                break
            if not mt.minabs[q] > C * math.sqrt(t - g):
                continue
            if flavor is Flavor.DTILDE_A:
                if not _fluctuation(stack, int(mt.left[q]), float(mt.frac[q]), j) < L * math.sqrt(t - g):
                    continue
            return MembershipRecord(t, flavor, C, s, L, True, n, g, int(mt.left[q]), bool(mt.exact[q]))
    return MembershipRecord(t, flavor, C, s, L, False)


def _markers_after(v: np.ndarray, g: float, j: int, dt: float) -> bool:
    """Whether ``v`` has a zero marker in ``(g, t_j]``, from the raw nodes."""
    for i in range(max(int(g / dt) - 1, 0), j + 1):
        if i * dt > g and v[i] == 0.0:
            return True
        if i < j and v[i] * v[i + 1] < 0.0:
            if (i + v[i] / (v[i] - v[i + 1])) * dt > g:
                return True
    return False


def verify_witness(stack: IterateStack, rec: MembershipRecord) -> bool:
    """Re-check every defining inequality of a positive record from the stack values."""
    if not rec.member:
        return True
    n, left, dt = rec.level, rec.left, stack.dt
    v = stack.values[n]
    if rec.exact:
        if v[left] != 0.0:
            return False
        frac = 0.0
    else:
        if not v[left] * v[left + 1] < 0.0:
            return False
        frac = v[left] / (v[left] - v[left + 1])
    g = (left + frac) * dt
    if g != rec.gamma:
        return False
    j = stack.grid.index_of(rec.t)
    t = j * dt
    if not (rec.s * t < g < t):
        return False
    mins = float(np.min(np.abs(_interp(stack.values[:n], left, frac)))) if n > 0 else math.inf
    if not mins > rec.C * math.sqrt(t - g):
        return False
    if rec.flavor is not Flavor.A:
        if n < 1:
            return False
        for k in range(n + 1):
            if _markers_after(stack.values[k], g, j, dt):
                return False
    if rec.flavor is Flavor.DTILDE_A:
        if not _fluctuation(stack, left, frac, j) < rec.L * math.sqrt(t - g):
            return False
    return True


def good_time_mask(stack: IterateStack, C: float, s: float, j_lo: int = 0,
                   j_hi: int | None = None) -> np.ndarray:
    """Flavor-``A`` membership of every node ``j_lo..j_hi`` at once."""
    if j_hi is None:
        j_hi = stack.grid.step_count
    mt = stack.markers
    out = np.zeros(j_hi - j_lo + 1, dtype=np.bool_)
    _kernels.mark_good_times(mt.times, mt.minabs, stack.dt, float(C), float(s), j_lo, j_hi, out)
    return out


# ---------------------------------------------------------------- porosity

def _longest_run(mask: np.ndarray) -> int:
    best = cur = 0
    for m in mask:
        cur = cur + 1 if m else 0
        best = max(best, cur)
    return best


def porosity_runs(stack: IterateStack, C: float, s: float, eps_grid, t: float = 1.0) -> np.ndarray:
    """``f(t, eps) / eps`` per ``eps``, where ``f`` is the length of the longest
    interval inside ``(t - eps, t + eps)`` spanned by consecutive good nodes.

    A run of ``k`` good nodes counts as length ``(k + 1) dt``, so a fully good
    window gives exactly 2 and a window without good nodes gives 0.
    """
    dt = stack.dt
    jt = stack.grid.index_of(t, "t")
    out = []
    widths = [_eps_steps(stack, e) for e in eps_grid]
    w = max(widths)
    if jt + w > stack.grid.step_count or jt - w < 0:
        raise ValueError("the probe window leaves the grid; extend the horizon")
    mask = good_time_mask(stack, C, s, jt - w + 1, jt + w - 1)
    for e, k in zip(eps_grid, widths):
        sub = mask[w - k : w + k - 1]
        run = _longest_run(sub)
        out.append(((run + 1) * dt if run else 0.0) / e)
    return np.asarray(out)


def _eps_steps(stack: IterateStack, eps: float) -> int:
    k = stack.grid.index_of(eps, "eps")
    if k < 4:
        raise ValueError(f"eps={eps!r} is below the resolution floor of 4*dt")
    return k


@dataclass(frozen=True)
class PorosityRow:
    eps: float
    median: Interval
    mean: float
    se: float
    zero_fraction: float
    paths: int


def porosity_probe(ratios: np.ndarray, eps_grid) -> tuple:
    """Per-``eps`` summaries of the ``(paths, len(eps_grid))`` ratio matrix.

    Returns ``(rows, trend)``; ``trend`` describes the medians as ``eps``
    decreases: "nonincreasing", "nondecreasing", "constant" or "mixed".
    """
    ratios = np.asarray(ratios, dtype=np.float64)
    rows = []
    for a, e in enumerate(eps_grid):
        col = ratios[:, a]
        acc = EstimatorAccumulator().add(col)
        rows.append(PorosityRow(float(e), median_interval(col), acc.mean, acc.se,
                                float(np.mean(col == 0)), col.size))
    order = np.argsort(-np.asarray(eps_grid, dtype=np.float64))
    med = np.array([rows[i].median.estimate for i in order])
    d = np.diff(med)
    if np.all(d == 0):
        trend = "constant"
    elif np.all(d <= 0):
        trend = "nonincreasing"
    elif np.all(d >= 0):
        trend = "nondecreasing"
    else:
        trend = "mixed"
    return rows, trend


# ---------------------------------------------------------------- t-invariance

@dataclass
class InvarianceTable:
    t_list: list
    probabilities: list  # Interval per t
    counts: list
    paths: int
    pairs: list = field(default_factory=list)  # (t1, t2, z, p, within_3se)


def t_invariance_check(members: np.ndarray, t_list) -> InvarianceTable:
    """``members[p, a]`` is the membership of ``t_list[a]`` for path ``p``."""
    members = np.asarray(members, dtype=bool)
    P = members.shape[0]
    counts = [int(c) for c in members.sum(axis=0)]
    tab = InvarianceTable(list(t_list), [wilson_interval(c, P) for c in counts], counts, P)
    for a, b in itertools.combinations(range(len(t_list)), 2):
        z, p = two_proportion_z(counts[a], P, counts[b], P)
        pa, pb = counts[a] / P, counts[b] / P
        joint = math.sqrt((pa * (1 - pa) + pb * (1 - pb)) / P)
        tab.pairs.append((t_list[a], t_list[b], z, p, abs(pa - pb) <= 3 * joint))
    return tab


def txa_check(path: Path, depth: int, C: float, s: float, x: float = 2.0, conv=None) -> dict:
    """Pathwise scaling relation: node ``j`` is good for ``w`` exactly when node
    ``j`` (time ``j dt / x^2``) is good for the rescaled path.  Also compares the
    rescaled iterates with the iterates of the rescaled path."""
    kw = {} if conv is None else {"conv": conv}
    st = iterate(path, depth, **kw)
    sc = iterate(scale_path(path, x), depth, **kw)
    direct = scale_path(st.base, x)
    iter_ok = all(
        sc.iterate_path(n).same_as(scale_path(st.iterate_path(n), x)) for n in range(depth + 1)
    ) and sc.base.same_as(direct)
    m1 = good_time_mask(st, C, s)
    m2 = good_time_mask(sc, C, s)
    return {"mask_mismatches": int(np.sum(m1 != m2)), "iterates_equal": bool(iter_ok),
            "members": int(m1.sum())}


# ---------------------------------------------------------------- X/Y/A association

def phi_coefficient(a, b) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    n11 = np.sum(a & b)
    n10 = np.sum(a & ~b)
    n01 = np.sum(~a & b)
    n00 = np.sum(~a & ~b)
    den = math.sqrt(float((n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00)))
    if den == 0:
        return math.nan
    return float(n11 * n00 - n10 * n01) / den


@dataclass
class CrosscheckTable:
    q: float
    x_cut: float
    y_cut: float
    counts: dict  # (small_x, large_y, member) -> count
    phi_xy: float
    phi_xa: float
    phi_ya: float
    used: int
    y_missing: int


def xy_event_crosscheck(x_hat, y_hat, member, q: float = 0.25) -> CrosscheckTable:
    """Cross-tabulate ``{X small}``, ``{Y large}`` and ``{1 good}``; paths whose
    ``Y`` proxy is missing are left out and counted."""
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    x = np.asarray(x_hat, dtype=np.float64)
    y = np.asarray(y_hat, dtype=np.float64)
    m = np.asarray(member, dtype=bool)
    ok = np.isfinite(y) & np.isfinite(x)
    x, y, m = x[ok], y[ok], m[ok]
    if x.size == 0:
        return CrosscheckTable(q, math.nan, math.nan, {}, math.nan, math.nan, math.nan, 0, int((~ok).sum()))
    xc = float(np.quantile(x, q))
    yc = float(np.quantile(y, 1 - q))
    sx = x <= xc
    ly = y >= yc
    counts = {}
    for key in itertools.product((True, False), repeat=3):
        counts[key] = int(np.sum((sx == key[0]) & (ly == key[1]) & (m == key[2])))
    return CrosscheckTable(q, xc, yc, counts, phi_coefficient(sx, ly), phi_coefficient(sx, m),
                           phi_coefficient(ly, m), int(x.size), int((~ok).sum()))
