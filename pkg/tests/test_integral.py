import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

import oracles
from levylab.integral import (
    ConstantField,
    LevyField,
    NonOrthogonalError,
    OrthogonalField,
    RotationField,
    VectorPath,
    apply_transform,
    composed_field,
    ergodic_average,
    iterate_field,
    mixing_statistic,
    xn_process,
    xn_squared_identity_check,
)
from levylab.levy import iterate, levy_transform
from levylab.paths import Grid, Path, RngStream, generate_path

HAND = [0, 1, 2, 1, 0, -1]
finite = st.floats(-5, 5, allow_nan=False)


def gauss(seed, stream, m=256):
    return generate_path(Grid(m, 1 / m), "gaussian", RngStream(seed, stream))


def test_vector_path_validation():
    g = Grid(4, 0.25)
    with pytest.raises(ValueError):
        VectorPath(g, np.zeros((3, 2)))
    with pytest.raises(ValueError):
        VectorPath(g, np.zeros((4, 9)))
    vp = VectorPath(g, np.ones((4, 2)))
    assert vp.values[-1].tolist() == [4, 4]
    with pytest.raises(ValueError):
        vp.to_path()


def test_identity_and_negation_fields():
    p = gauss(1, 0)
    assert apply_transform(p, ConstantField.identity()).same_as(p)
    neg = apply_transform(p, ConstantField.negation())
    assert np.array_equal(neg.values, -p.values)
    vp = VectorPath(Grid(64, 1 / 64), np.random.default_rng(0).normal(size=(64, 3)))
    assert np.array_equal(apply_transform(vp, ConstantField.identity(3)).values, vp.values)
    assert np.array_equal(apply_transform(vp, ConstantField.negation(3)).values, -vp.values)


@given(st.lists(finite, min_size=1, max_size=40), st.sampled_from(["minus_one", "plus_one"]))
def test_scalar_engine_matches_levy_bit_exact(inc, conv):
    p = Path(Grid(len(inc), 0.5), np.array(inc))
    assert apply_transform(p, LevyField(conv)).same_as(levy_transform(p, conv))


def test_field_stack_matches_levy_stack():
    p = gauss(2, 3, 1024)
    fs = iterate_field(p, LevyField(), 10, check=True)
    s = iterate(p, 10)
    for n in range(11):
        assert np.array_equal(fs.paths[n].values[:, 0], s.values[n])
        assert np.array_equal(fs.sign_products[n, :, 0, 0], s.sign_products[n])


def test_composed_field_order_and_identity():
    rng = np.random.default_rng(5)
    mats = [special_ortho_group.rvs(3, size=7, random_state=rng) for _ in range(3)]
    assert np.array_equal(composed_field(mats, 0), np.broadcast_to(np.eye(3), (7, 3, 3)))
    h2 = composed_field(mats, 2)
    np.testing.assert_allclose(h2, mats[1] @ mats[0], atol=0)
    with pytest.raises(ValueError):
        composed_field(mats, 4)


def test_composed_field_stays_orthogonal():
    rng = np.random.default_rng(6)
    mats = [special_ortho_group.rvs(4, size=32, random_state=rng) for _ in range(64)]
    h = composed_field(mats, 64)
    err = np.abs(np.swapaxes(h, -1, -2) @ h - np.eye(4)).max()
    assert err <= 1e-10


def test_scalar_composed_matches_sign_products():
    s = iterate(gauss(3, 0), 2)
    mats = [s.signs(k).astype(float)[:, None, None] for k in range(2)]
    assert np.array_equal(composed_field(mats, 2)[:, 0, 0], s.sign_products[2])


class _Skewed(OrthogonalField):
    dim = 2

    def matrix(self, i, prefix):
        return np.array([[1.0, 0.1], [0.0, 1.0]])


def test_non_orthogonal_field_rejected():
    vp = VectorPath(Grid(4, 0.25), np.ones((4, 2)))
    with pytest.raises(NonOrthogonalError):
        apply_transform(vp, _Skewed(), check=True)
    with pytest.raises(ValueError):
        apply_transform(vp, LevyField())


def test_rotation_field_preserves_increment_norms():
    vp = VectorPath(Grid(128, 1 / 128), np.random.default_rng(9).normal(size=(128, 2)) / 8)
    out = apply_transform(vp, RotationField(omega=2.0), check=True)
    np.testing.assert_allclose(np.linalg.norm(out.increments, axis=1),
                               np.linalg.norm(vp.increments, axis=1), rtol=1e-14)
    # default per-node evaluator agrees with the vectorized one
    vals = vp.values
    slow = OrthogonalField.matrices(RotationField(omega=2.0), vals)
    np.testing.assert_allclose(RotationField(omega=2.0).matrices(vals), slow, atol=1e-15)


def test_xn_hand_example():
    s = iterate(Path.from_values(HAND, 0.2), 1)
    x = xn_process(s, 1)
    assert x.at(1.0)[0, 0] == pytest.approx(0.2, abs=1e-15)
    assert x.values[0, 0, 0] == 0


def test_x0_is_time_exactly():
    s = iterate(gauss(4, 0, 1000), 0)
    x = xn_process(s, 0).values[:, 0, 0]
    assert np.array_equal(x, np.arange(1001) * s.dt)
    fs = iterate_field(VectorPath(Grid(16, 1 / 16), np.ones((16, 3))), RotationField(), 0)
    x3 = xn_process(fs, 0)
    assert np.array_equal(x3.at(0.5), 0.5 * np.eye(3))


def test_hs_bound_exact():
    for i in range(20):
        s = iterate(gauss(5, i), 8)
        for n in range(9):
            x = xn_process(s, n)
            assert np.all(x.hs_norm() <= np.arange(s.grid.step_count + 1) * s.dt * (1 + 1e-15))
    vp = VectorPath(Grid(64, 1 / 64), np.random.default_rng(1).normal(size=(64, 2)) / 8)
    fs = iterate_field(vp, RotationField(omega=3.0), 5)
    for n in range(6):
        bound = np.arange(65) / 64 * math.sqrt(2)
        assert np.all(xn_process(fs, n).hs_norm() <= bound * (1 + 1e-12))


def test_xn_squared_identity():
    worst = 0.0
    for i in range(100):
        s = iterate(gauss(6, i), 3)
        for n in range(4):
            worst = max(worst, abs(xn_squared_identity_check(s, n, 1.0)))
    assert worst <= 1e-10
    # constant sign: every product is +1 and X_1 = -t
    s = iterate(Path.from_values([0, -1, -2, -3, -4], 0.25), 1)
    assert xn_process(s, 1).at(1.0)[0, 0] == -1.0
    assert xn_squared_identity_check(s, 1, 1.0) == 0


def test_ergodic_average_flags_constant_fields():
    vp = [VectorPath.from_path(gauss(7, i, 64)) for i in range(5)]
    for fld in (ConstantField.identity(), ConstantField.negation()):
        est = ergodic_average([iterate_field(p, fld, 6) for p in vp], 6, 1.0)
        assert est.estimate == pytest.approx(1.0, abs=1e-15)
        assert est.non_ergodic
    vp2 = [VectorPath(Grid(64, 1 / 64), np.ones((64, 2))) for _ in range(3)]
    est = ergodic_average([iterate_field(p, ConstantField.identity(2), 4) for p in vp2], 4, 0.5)
    assert est.estimate == pytest.approx(0.25 * 2)
    assert est.non_ergodic


def test_ergodic_average_levy_not_flagged():
    est = ergodic_average([iterate(gauss(8, i), 6) for i in range(50)], 6, 1.0)
    assert not est.non_ergodic
    assert est.estimate < 1.0
    assert len(est.per_level) == 6
    with pytest.raises(ValueError):
        ergodic_average([], 0, 1.0)


def test_mixing_statistic_level_zero():
    est = mixing_statistic([iterate(gauss(9, i), 2) for i in range(10)], 0, 1.0)
    assert est.estimate == 1.0
    assert est.se == 0.0
    vp = VectorPath(Grid(64, 1 / 64), np.ones((64, 4)))
    est = mixing_statistic([iterate_field(vp, ConstantField.identity(4), 3)], 3, 1.0)
    assert est.estimate == pytest.approx(2.0)


@pytest.mark.slow
def test_ex1_squared_monte_carlo():
    g = Grid(2**14, 2.0**-14)
    est = mixing_statistic((iterate(generate_path(g, "gaussian", RngStream(31, i)), 1)
                            for i in range(20_000)), 1, 1.0, power=2)
    assert abs(est.estimate - oracles.EX1_SQUARED) <= 3 * est.se + 0.005
