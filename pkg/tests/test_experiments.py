import math

import numpy as np
import pytest

import oracles
from levylab.experiments import (
    Flavor,
    coupling_probe,
    coupling_table,
    correlation_hn,
    eps_products,
    find_tau,
    good_time_mask,
    membership,
    phi_coefficient,
    porosity_probe,
    porosity_runs,
    t_invariance_check,
    txa_check,
    verify_witness,
    xy_event_crosscheck,
)
from levylab.levy import iterate
from levylab.paths import Grid, OffGridError, Path, RngStream, generate_path

HAND = [0, 1, 2, 1, 0, -1]
FLAVORS = (Flavor.A, Flavor.TILDE_A, Flavor.DTILDE_A)


def gauss_stack(seed, i, m=256, depth=6, horizon=1):
    g = Grid(m * horizon, 1 / m)
    return iterate(generate_path(g, "gaussian", RngStream(seed, i)), depth)


# ---------------------------------------------------------------- correlations

def test_eps_products_are_signs():
    s = gauss_stack(1, 0)
    e = eps_products(s, 0.5)
    assert e[0] == 1
    assert set(np.unique(e)) <= {-1, 1}
    with pytest.raises(ValueError):
        correlation_hn([s], 1, 1.0, 1.0)
    with pytest.raises(ValueError):
        correlation_hn([s], 7, 0.5)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_first_level_correlation_matches_arcsine(s):
    stacks = (gauss_stack(2, i, m=1024, depth=1) for i in range(20_000))
    mean, se, count = correlation_hn(stacks, 1, s)
    assert count == 20_000
    assert abs(mean - oracles.ARCSINE[s]) <= 3 * se + 0.005


def test_correlation_depends_on_ratio_only():
    n_paths = 10_000
    a = [gauss_stack(3, i, m=1024, depth=3, horizon=1) for i in range(n_paths)]
    b = [gauss_stack(4, i, m=1024, depth=3, horizon=2) for i in range(n_paths)]
    for n in (1, 2, 3):
        ma, sa, _ = correlation_hn(a, n, 0.25, 1.0)
        mb, sb, _ = correlation_hn(b, n, 0.5, 2.0)
        assert abs(ma - mb) <= 3 * math.hypot(sa, sb)


# ---------------------------------------------------------------- stopping time

def test_find_tau_base_crossing():
    s = iterate(Path.from_values([0, 1, 0.5, -0.5, -1], 0.25), 0)
    tr = find_tau(s, 1.0, 0.25)
    assert tr.found and tr.nu == 0
    assert tr.tau == pytest.approx(0.625)
    assert tr.index == 3
    assert tr.residual == pytest.approx(0.125)


def test_find_tau_upper_level_and_tie_break():
    # base stays at or above 2 after the start; the first transform hits 0 at t=0.375,
    # the second one too, and the lower level wins the tie
    s = iterate(Path.from_values([0, 2, 3, 4, 3, 2, 3, 2, 3], 0.125), 2)
    tr = find_tau(s, 0.5, 0.125)
    assert tr.found and tr.nu == 1
    assert tr.tau == 0.375
    assert tr.index == 3 and tr.residual == 0
    assert not find_tau(s, 1e6, 0.125).found


def test_find_tau_huge_barrier_keeps_base_zeros():
    s = iterate(Path.from_values([0, 1, 0.5, -0.5, -1], 0.25), 3)
    tr = find_tau(s, 1e6, 0.25)
    assert tr.found and tr.nu == 0


def test_find_tau_off_grid_s():
    s = iterate(Path.from_values(HAND, 0.2), 1)
    with pytest.raises(OffGridError, match="s="):
        find_tau(s, 1.0, 0.3)


def test_coupling_not_found_leaves_products():
    s = iterate(Path.from_values([0, 2, 3, 4, 3, 2, 3, 2, 3], 0.125), 2)
    out = coupling_probe(s, 1e6, 0.125)
    assert not out.tau.found
    assert np.array_equal(out.eps, out.eps_reflected)
    assert not out.flip_violations().any()


def test_coupling_structure_on_random_paths():
    outs = []
    for i in range(200):
        st = gauss_stack(5, i, m=512, depth=8)
        o = coupling_probe(st, 0.5, 0.5)
        outs.append(o)
        if o.tau.found:
            assert o.prefix_identical
            if o.resolved:
                # lower levels keep their signs on [r, 1], so level nu is mirrored exactly
                assert o.lower_signs_kept and o.mirrored
            assert 0 <= o.tau.residual < st.dt
            if o.lower_signs_kept:
                # products up to level nu only see the prefix and the kept lower signs
                assert o.eps_reflected[: o.tau.nu + 1].tolist() == o.eps[: o.tau.nu + 1].tolist()
    sup = [bool(np.max(np.abs(gauss_stack(5, i, m=512, depth=0).values[0])) > 0.5) for i in range(200)]
    assert sum(o.tau.found and o.resolved for o in outs) >= 20
    rows = coupling_table(outs, sup, [1, 4, 8])
    assert [r.n for r in rows] == [1, 4, 8]
    for r in rows:
        assert r.paths == 200
        assert r.violations + r.discretization_events <= r.on_event
        assert -1 <= r.mean_eps <= 1


# ---------------------------------------------------------------- good times

def test_membership_hand_examples():
    s = iterate(Path.from_values(HAND, 0.2), 2)
    rec = membership(s, 1.0, Flavor.A, C=1.0, s=0.5)
    assert rec.member and rec.level == 0 and rec.gamma == pytest.approx(0.8) and rec.exact
    assert verify_witness(s, rec)
    # the upper levels' last zeros sit at 0.4 <= s t
    assert not membership(s, 1.0, Flavor.TILDE_A, C=1.0, s=0.5).member
    assert membership(s, 1.0, Flavor.TILDE_A, C=1.0, s=0.25).member is False


def _ref_levels(st):
    return [np.array(st.values[n]) for n in range(st.depth + 1)]


def test_membership_matches_reference_scan():
    checked = 0
    for i in range(12):
        st = gauss_stack(6, i, m=64, depth=4)
        levels = _ref_levels(st)
        mask = good_time_mask(st, 1.0, 0.5)
        for j in range(1, 65):
            ref = oracles.ref_good_time(levels, st.dt, j, 1.0, 0.5)
            assert membership(st, j * st.dt, Flavor.A, 1.0, 0.5).member == ref
            assert mask[j] == ref
            checked += 1
    assert checked == 12 * 64


def test_witness_nesting_and_monotonicity():
    for i in range(25):
        st = gauss_stack(7, i, m=512, depth=10)
        for j in range(256, 513, 16):
            t = j * st.dt
            recs = {f: membership(st, t, f, C=1.0, s=0.5, L=1.0) for f in FLAVORS}
            for r in recs.values():
                assert verify_witness(st, r)
            assert recs[Flavor.DTILDE_A].member <= recs[Flavor.TILDE_A].member <= recs[Flavor.A].member
            if recs[Flavor.A].member:
                assert membership(st, t, Flavor.A, C=0.5, s=0.25).member
                assert membership(st, t, Flavor.A, C=1.0, s=0.25).member
                assert membership(st, t, Flavor.A, C=0.5, s=0.5).member


def test_tiny_barrier_almost_always_good():
    hits = sum(membership(gauss_stack(8, i, m=1024, depth=8), 1.0, Flavor.A, C=1e-9, s=0.5).member
               for i in range(200))
    assert hits >= 190


def test_verify_witness_rejects_tampering():
    st = iterate(Path.from_values(HAND, 0.2), 2)
    rec = membership(st, 1.0, Flavor.A, 1.0, 0.5)
    from dataclasses import replace
    assert not verify_witness(st, replace(rec, gamma=0.7))
    assert not verify_witness(st, replace(rec, C=10.0, level=1, left=2))


# ---------------------------------------------------------------- porosity

def _zigzag_stack(depth=0):
    m = 128
    inc = np.tile([0.1, -0.1], m // 2)
    return iterate(Path(Grid(m, 1 / 64), inc), depth)


def test_porosity_all_members():
    st = _zigzag_stack()
    r = porosity_runs(st, 1.0, 0.5, [0.25, 0.125, 0.0625])
    assert r.tolist() == [2.0, 2.0, 2.0]


def test_porosity_no_members():
    st = iterate(Path(Grid(128, 1 / 64), np.full(128, 0.1)), 0)
    assert porosity_runs(st, 1.0, 0.5, [0.25, 0.0625]).tolist() == [0.0, 0.0]


def test_porosity_resolution_floor_and_horizon():
    st = _zigzag_stack()
    with pytest.raises(ValueError, match="resolution"):
        porosity_runs(st, 1.0, 0.5, [2 / 64])
    short = iterate(Path(Grid(64, 1 / 64), np.full(64, 0.1)), 0)
    with pytest.raises(ValueError, match="horizon"):
        porosity_runs(short, 1.0, 0.5, [0.25])


def test_porosity_run_is_a_longest_interval():
    st = gauss_stack(9, 0, m=256, depth=8, horizon=2)
    eps = [0.25, 0.125, 0.0625, 0.03125]
    r = porosity_runs(st, 1.0, 0.5, eps)
    mask = good_time_mask(st, 1.0, 0.5)
    for e, val in zip(eps, r):
        k = int(e * 256)
        sub = mask[256 - k + 1: 256 + k]
        assert 0 <= val <= 2
        assert (val == 0) == (not sub.any())
        assert (val == 2) == bool(sub.all())


def test_porosity_probe_trend():
    ratios = np.array([[2.0, 1.0, 0.5], [2.0, 1.0, 0.0], [1.0, 0.5, 0.5]])
    rows, trend = porosity_probe(ratios, [0.25, 0.125, 0.0625])
    assert trend == "nonincreasing"
    assert rows[0].median.estimate == 2.0
    assert rows[2].zero_fraction == pytest.approx(1 / 3)
    _, trend = porosity_probe(np.ones((4, 3)), [0.25, 0.125, 0.0625])
    assert trend == "constant"


# ---------------------------------------------------------------- invariance

def test_t_invariance_table():
    m = np.zeros((100, 2), dtype=bool)
    m[:30, 0] = True
    m[:32, 1] = True
    tab = t_invariance_check(m, [1.0, 2.0])
    assert tab.counts == [30, 32]
    assert tab.pairs[0][4]
    m[:, 1] = True
    assert not t_invariance_check(m, [1.0, 2.0]).pairs[0][4]


@pytest.mark.parametrize("x", [2.0, 0.5, 4.0])
def test_txa_bit_exact(x):
    for i in range(10):
        p = generate_path(Grid(1024, 1 / 512), "gaussian", RngStream(10, i))
        res = txa_check(p, 8, 1.0, 0.5, x)
        assert res["iterates_equal"]
        assert res["mask_mismatches"] == 0


# ---------------------------------------------------------------- association

def test_crosscheck_perfect_fixture():
    x = np.arange(100.0)
    tab = xy_event_crosscheck(x, -x, x < 25, q=0.25)
    assert tab.phi_xy == pytest.approx(1.0)
    assert tab.phi_xa == pytest.approx(1.0)
    assert tab.used == 100
    assert sum(tab.counts.values()) == 100


def test_crosscheck_null_fixture():
    rng = np.random.default_rng(0)
    n = 20_000
    tab = xy_event_crosscheck(rng.random(n), rng.random(n), rng.random(n) < 0.5)
    for phi in (tab.phi_xy, tab.phi_xa, tab.phi_ya):
        assert abs(phi) < 4 / math.sqrt(n)


def test_crosscheck_missing_and_degenerate():
    tab = xy_event_crosscheck([0.1, 0.2, 0.3], [math.nan, 1.0, 2.0], [True, False, True])
    assert tab.y_missing == 1 and tab.used == 2
    assert math.isnan(phi_coefficient([True, True], [False, True]))
    with pytest.raises(ValueError):
        xy_event_crosscheck([1.0], [1.0], [True], q=1.0)
