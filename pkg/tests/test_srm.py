import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from simcomm import srm
from simcomm.geometry import SimGeometry
from simcomm.srm import (
    IpddParams,
    complexity,
    dbm_to_watts,
    default_init,
    effective_gains,
    halfspace_projection,
    jain_index,
    make_instance,
    proj_power_budget,
    proj_qos_power,
    sinr_and_rate,
    surrogate,
    update_u,
    update_zeta,
    vd_bsum,
)

FAST = IpddParams(max_outer=40)


def instance(rate=0.0, seed=0, layers=2, users=2, p_dbm=30.0):
    g = SimGeometry(layers, 4, 4, num_antennas=users)
    return make_instance(g, users, seed, p_dbm, rate_threshold=rate)


@pytest.fixture(scope="module")
def inst():
    return instance()


def test_dbm_conversion():
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert dbm_to_watts(-80.0) == pytest.approx(1e-11)


@given(hnp.arrays(float, st.integers(1, 6), elements=st.floats(-5, 5)), st.floats(0.1, 10))
@settings(max_examples=200, deadline=None)
def test_budget_projection_is_nearest(p_hat, p_max):
    p = proj_power_budget(p_hat, p_max)
    assert np.all(p >= 0) and np.sum(p**2) <= p_max * (1 + 1e-9)
    # brute force: scaled and clipped candidates are never closer
    rng = np.random.default_rng(0)
    cands = np.abs(rng.normal(size=(300, len(p_hat))))
    cands *= np.sqrt(p_max) * rng.random((300, 1)) / np.linalg.norm(cands, axis=1, keepdims=True)
    d = np.linalg.norm(p - p_hat)
    assert np.all(np.linalg.norm(cands - p_hat, axis=1) >= d - 1e-7)


def test_budget_projection_rejects_bad_budget():
    with pytest.raises(ValueError):
        proj_power_budget([1.0], 0.0)


def test_halfspace_projection_against_grid():
    c, off = np.array([1.0, -2.0]), 0.5
    x = np.array([2.0, 0.0])
    y = halfspace_projection(x, c, off)
    grid = np.stack(np.meshgrid(np.linspace(-3, 3, 601), np.linspace(-3, 3, 601)), -1).reshape(-1, 2)
    feasible = grid[grid @ c + off <= 0]
    best = feasible[np.argmin(np.linalg.norm(feasible - x, axis=1))]
    assert c @ y + off == pytest.approx(0.0, abs=1e-12)
    assert np.linalg.norm(y - x) <= np.linalg.norm(best - x) + 1e-12
    np.testing.assert_array_equal(halfspace_projection(-x, c, off), -x)


def test_receiver_and_weight_are_block_optimal(inst):
    stack, p = default_init(inst)
    u = update_u(inst, stack, p)
    zeta = update_zeta(inst, stack, p, u)
    base = surrogate(inst, stack, p, u, zeta)
    rng = np.random.default_rng(3)
    for _ in range(20):
        du = 1e-3 * np.abs(u) * (rng.normal(size=u.shape) + 1j * rng.normal(size=u.shape))
        assert surrogate(inst, stack, p, u + du, zeta) >= base - 1e-12
        dz = zeta * (1 + 1e-2 * rng.normal(size=zeta.shape))
        assert surrogate(inst, stack, p, u, dz) >= base - 1e-12


def test_wmmse_weight_equals_rate(inst):
    stack, p = default_init(inst)
    _, rate, _ = sinr_and_rate(inst, stack, p)
    np.testing.assert_allclose(np.log2(update_zeta(inst, stack, p)), rate, rtol=1e-8)


def test_gains_shape_and_rate_sum(inst):
    stack, p = default_init(inst)
    assert effective_gains(inst, stack).shape == (2, 2)
    sinr, rate, total = sinr_and_rate(inst, stack, p)
    assert total == pytest.approx(rate.sum()) and np.all(sinr > 0)


def test_jain_index():
    assert jain_index([1, 1, 1]) == pytest.approx(1.0)
    assert jain_index([1, 0, 0]) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        jain_index([0, 0])
    with pytest.raises(ValueError):
        jain_index([-1, 1])


def test_qos_power_projection_lands_in_set():
    q = instance(rate=0.005)
    stack, p = default_init(q)
    starved = p * np.array([0.1, 1.0])
    assert sinr_and_rate(q, stack, starved)[0][0] < q.gamma_th
    out = proj_qos_power(starved, q, 0, stack)
    sinr, _, _ = sinr_and_rate(q, stack, out)
    assert sinr[0] >= q.gamma_th * (1 - 1e-3)


def test_qos_power_projection_keeps_feasible_point():
    q = instance(rate=0.001)
    stack, p = default_init(q)
    assert sinr_and_rate(q, stack, p)[0][0] > q.gamma_th
    np.testing.assert_allclose(proj_qos_power(p, q, 0, stack), p, rtol=1e-9)


def test_min_qos_power_meets_targets_exactly():
    q = instance(rate=0.001, seed=1)
    stack, _ = default_init(q)
    H = effective_gains(q, stack)
    p = srm._min_qos_power(q, H)
    sinr, _, _ = sinr_and_rate(q, stack, p)
    np.testing.assert_allclose(sinr, q.gamma_th, rtol=1e-8)


def test_balanced_power_equalizes_sinr():
    q = instance(rate=0.05, users=3)
    stack, _ = default_init(q)
    p = srm._balanced_power(q, effective_gains(q, stack), iters=500)
    sinr, _, _ = sinr_and_rate(q, stack, p)
    assert np.sum(p**2) == pytest.approx(q.p_max)
    assert np.ptp(sinr) <= 1e-6 * sinr.max()


def test_unconstrained_run_is_monotone(inst):
    sol = vd_bsum(inst, params=FAST)
    trace = np.array(sol.trace)
    assert np.all(np.diff(trace) >= -1e-6 * trace.max())
    assert sol.sum_rate > trace[0]
    assert np.max(np.abs(np.abs(sol.stack) - 1)) < 1e-12
    assert np.sum(sol.power**2) <= inst.p_max * (1 + 1e-9)


def test_qos_run_meets_targets():
    q = instance(rate=0.1, seed=1)
    sol = vd_bsum(q, params=FAST)
    assert not sol.infeasible
    assert np.all(sol.rates >= 0.1 * (1 - 1e-3))


def test_unreachable_targets_are_flagged():
    q = instance(rate=30.0, seed=2)
    sol = vd_bsum(q, params=IpddParams(max_outer=5))
    assert sol.infeasible and not sol.converged


def test_instances_are_seeded():
    assert instance(seed=4).fingerprint() == instance(seed=4).fingerprint()
    assert instance(seed=4).fingerprint() != instance(seed=5).fingerprint()
    with pytest.raises(ValueError):
        make_instance(SimGeometry(1, 4, 4, num_antennas=1), 2)


def test_complexity_formula():
    assert complexity(3, 3, 64, 2, 10, 20) == 9 * 3 * 64 + 9 * 10 + 2 * 3 * 64 * 64 * 20 + 2 * 64**3


def test_param_validation():
    with pytest.raises(ValueError):
        IpddParams(rho_shrink=1.0)
    with pytest.raises(ValueError):
        IpddParams(eta0=0)
