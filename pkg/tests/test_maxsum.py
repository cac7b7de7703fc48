import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wpcn_noma import (Allocation, NetworkInstance, PhysicalConfig, Scheme, Status, build_network,
                       check_feasible)
from wpcn_noma import maxsum
from wpcn_noma.oracle import GridSpec, Objective, _axis, _run, finite_diff_gradient, grid_search
from wpcn_noma.throughput import decoding_orders

LN2 = math.log(2.0)


def test_condensation_at_unit_point():
    state = maxsum.monomial_approx(np.ones((3, 2)), [0.2, 0.5])
    assert np.allclose(state.y, 0.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_condensation_tangent_and_below(seed):
    rng = np.random.default_rng(seed)
    k, t = rng.integers(1, 4), rng.integers(1, 4)
    x_bar = np.exp(rng.uniform(-5, 5, (k, t)))
    tau = rng.uniform(0, 0.95, t)
    state = maxsum.monomial_approx(x_bar, tau)
    assert state.log_approx(x_bar) == pytest.approx(state.log_exact(x_bar), rel=1e-12, abs=1e-12)
    x = np.exp(rng.uniform(-8, 8, (k, t)))
    assert state.log_approx(x) <= state.log_exact(x) + 1e-10


def test_condensation_validation():
    with pytest.raises(ValueError):
        maxsum.monomial_approx([[0.0]], [0.5])
    with pytest.raises(ValueError):
        maxsum.monomial_approx([[1.0]], [1.0])


def test_given_tau_matches_energy_grid():
    inst = build_network(PhysicalConfig(), 2, 1, 60.0, 0)
    tau = np.array([0.3])
    e, x, val, status = maxsum.solve_maxsum_lcd_given_tau(inst, tau)
    assert status is not Status.INFEASIBLE
    spec = GridSpec(objective=Objective.MAX_SUM, scheme=Scheme.LCD)
    best, _, _ = _run(inst, spec, [np.array([0.3]), _axis(1e-3), _axis(1e-3)])
    assert val >= 0.98 * best
    assert check_feasible(inst, Allocation(tau, e), Scheme.LCD).feasible


def test_given_tau_history_monotone():
    inst = build_network(PhysicalConfig(), 5, 2, 40.0, 1)
    hist = []
    maxsum.solve_maxsum_lcd_given_tau(inst, [0.2, 0.2], history=hist)
    assert len(hist) >= 2
    assert all(b >= a - 1e-8 for a, b in zip(hist, hist[1:]))


def test_given_tau_infeasible_threshold():
    inst = build_network(PhysicalConfig(s_th_db=10.0), 5, 1, 60.0, 0)
    assert maxsum.solve_maxsum_lcd_given_tau(inst, [0.5])[3] is Status.INFEASIBLE


def test_given_e_zero_energy():
    inst = build_network(PhysicalConfig(s_th_db=None), 2, 2, 40.0, 0)
    tau, val, status = maxsum.solve_maxsum_lcd_given_E(inst, np.zeros((2, 2)))
    assert status is Status.OPTIMAL and val == 0.0


def test_given_e_single_user_scan():
    inst = build_network(PhysicalConfig(s_th_db=None), 1, 1, 20.0, 0)
    e = np.array([[0.3 * inst.gamma[0, 0]]])
    tau, val, status = maxsum.solve_maxsum_lcd_given_E(inst, e)
    grid = np.arange(0.3, 1.0, 1e-4)
    snr = inst.g[0, 0] * e[0, 0] / (inst.noise_power * (1 - grid))
    scan = np.max((1 - grid) * np.log2(1 + snr))
    assert val == pytest.approx(scan, abs=1e-3)
    assert tau[0] >= 0.3 - 1e-9


@pytest.mark.parametrize("d", [40.0, 80.0])
def test_lcd_against_grid(d):
    inst = build_network(PhysicalConfig(), 2, 1, d, 0)
    sol = maxsum.solve_maxsum_lcd(inst)
    ref = grid_search(inst, GridSpec(objective=Objective.MAX_SUM, scheme=Scheme.LCD))
    assert sol.objective >= 0.98 * ref.objective
    assert all(b >= a - 1e-8 for a, b in zip(sol.history, sol.history[1:]))
    assert check_feasible(inst, sol.alloc, Scheme.LCD).feasible


def test_lcd_infeasible_at_high_threshold():
    inst = build_network(PhysicalConfig(s_th_db=0.0), 10, 2, 100.0, 0)
    assert maxsum.solve_maxsum_lcd(inst).status is Status.INFEASIBLE


def test_tau_only_baseline_not_better_than_full():
    inst = build_network(PhysicalConfig(), 3, 2, 60.0, 2)
    full = maxsum.solve_maxsum_lcd(inst)
    base = maxsum.solve_tau_only_lcd(inst)
    assert full.objective >= base.objective - 1e-8
    assert 0.0 <= base.info["tau0"] <= 1.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_sicd_against_grid_and_lcd(seed):
    inst = build_network(PhysicalConfig(), 2, 1, 60.0, seed)
    sol = maxsum.solve_maxsum_sicd(inst)
    assert sol.status is Status.OPTIMAL
    ref = grid_search(inst, GridSpec(objective=Objective.MAX_SUM, scheme=Scheme.SICD))
    assert sol.objective >= 0.98 * ref.objective
    assert sol.objective >= maxsum.solve_maxsum_lcd(inst).objective - 1e-8
    assert check_feasible(inst, sol.alloc, Scheme.SICD).feasible


def test_sicd_objective_order_free():
    inst = build_network(PhysicalConfig(s_th_db=None), 4, 2, 60.0, 3)
    sol = maxsum.solve_maxsum_sicd(inst)
    from wpcn_noma.throughput import rates
    for order in ([[0, 1, 2, 3]] * 2, [[3, 2, 1, 0]] * 2, [[1, 3, 0, 2], [2, 0, 3, 1]]):
        _, r = rates(inst, sol.alloc, Scheme.SICD, order)
        assert r.sum() == pytest.approx(sol.objective, rel=1e-8)


@pytest.mark.parametrize("k", [5, 10])
def test_sicd_concentrate_keeps_objective(k):
    inst = build_network(PhysicalConfig(), k, 2, 60.0, 0)
    spread = maxsum.solve_maxsum_sicd(inst, concentrate=False)
    packed = maxsum.solve_maxsum_sicd(inst)
    assert packed.objective == pytest.approx(spread.objective, rel=1e-10)
    assert check_feasible(inst, packed.alloc, Scheme.SICD).feasible
    share = lambda s: s.user_totals.max() / s.user_totals.sum()
    assert share(packed) >= share(spread) - 1e-12


def test_sicd_infeasible_thresholds():
    inst = NetworkInstance.from_gains([[1e-9], [1e-9]], 1e-6, 3e-13, s_th=1e4)
    assert maxsum.solve_maxsum_sicd(inst).status is Status.INFEASIBLE


# ---------------------------------------------------------------- dual side

def test_dual_coefficients_zero():
    inst = build_network(PhysicalConfig(), 3, 2, 40.0, 0)
    a, b = maxsum.dual_coefficients(inst, maxsum.DualPoint.zeros(3, 2), 0)
    assert np.all(a == 0) and b == 0


def test_dual_coefficients_single_user():
    inst = NetworkInstance.from_gains([[2e-5]], [[3e-3]], 3e-13, s_th=0.1)
    a, b = maxsum.dual_coefficients(inst, maxsum.DualPoint([[1.0]], [[0.0]]), 0)
    assert a[0] == pytest.approx(LN2) and b == pytest.approx(LN2 * 3e-3)


def test_dual_coefficients_first_decoded_has_no_earlier_term():
    inst = NetworkInstance.from_gains([[3e-5], [1e-5]], 1e-3, 3e-13, s_th=0.1)
    dual = maxsum.DualPoint([[0.0], [0.0]], [[0.0], [2.0]])
    a, _ = maxsum.dual_coefficients(inst, dual, 0)
    assert a[0] == 0.0  # decoded first: nobody earlier to interfere with
    assert a[1] == pytest.approx(-LN2 * 2.0 * 1e-5)


def test_inner_zero_duals_degenerate():
    inst = build_network(PhysicalConfig(), 2, 2, 40.0, 0)
    alloc = maxsum.dual_inner_solve(inst, maxsum.DualPoint.zeros(2, 2))
    assert np.all(alloc.tau0 == 1.0) and np.all(alloc.e == 0.0)


def test_inner_clamps_expensive_energy():
    inst = build_network(PhysicalConfig(), 2, 1, 40.0, 0)
    lam = 10.0 * inst.g / inst.noise_power  # price above any marginal rate
    alloc = maxsum.dual_inner_solve(inst, maxsum.DualPoint(lam, np.zeros((2, 1))))
    assert np.all(alloc.e == 0.0)


def _lagrangian(inst, lam, mu, tau, e):
    order = decoding_orders(inst)
    s2 = inst.noise_power
    u = 1.0 - tau
    val = float(np.sum(u * np.log2(1 + np.sum(inst.g * e, axis=0) / (s2 * u))))
    val += float(np.sum(lam * (np.cumsum(inst.gamma * tau, axis=1) - np.cumsum(e, axis=1))))
    for t in range(inst.t):
        later = 0.0
        for i in order[t][::-1]:
            val += mu[i, t] * (inst.g[i, t] * e[i, t] - inst.s_th[i] * (s2 * u[t] + later))
            later += inst.g[i, t] * e[i, t]
    return val


@pytest.mark.parametrize("seed", range(5))
def test_inner_solve_kkt(seed):
    inst = build_network(PhysicalConfig(), 2, 1, 40.0, 3)
    rng = np.random.default_rng(seed)
    lam = rng.uniform(0.02, 0.3, (2, 1)) / inst.gamma / LN2 / 2
    mu = rng.uniform(0.0, 0.5, (2, 1)) * lam / inst.g
    alloc = maxsum.dual_inner_solve(inst, maxsum.DualPoint(lam, mu))
    assert alloc.tau0[0] == 0.0 and np.any(alloc.e > 0)
    x = np.concatenate([alloc.tau0, alloc.e.ravel()])
    fn = lambda v: _lagrangian(inst, lam, mu, v[:1], v[1:].reshape(2, 1))
    # one-sided in tau (at its lower bound): central differences need tau > 0
    h = np.concatenate([[1e-7], 1e-6 * np.full(2, alloc.e.max())])
    shift = np.concatenate([[h[0]], np.zeros(2)])
    grad = finite_diff_gradient(fn, x + shift, h)
    scale = alloc.e.max()
    for i in range(2):
        if alloc.e[i, 0] > 0:
            assert abs(finite_diff_gradient(fn, x, h)[1 + i]) * scale <= 1e-6
        else:
            assert grad[1 + i] * scale <= 1e-6
    assert grad[0] <= 1e-6  # tau at 0: the Lagrangian must not rise with tau


@pytest.mark.parametrize("seed", range(4))
def test_dual_matches_primal(seed):
    inst = build_network(PhysicalConfig(), 3, 2, 60.0, seed)
    p = maxsum.solve_maxsum_sicd(inst)
    d = maxsum.solve_maxsum_sicd_dual(inst)
    assert d.status is Status.OPTIMAL
    assert d.objective == pytest.approx(p.objective, rel=1e-4)
    assert d.info["duality_gap"] <= 1e-4
    assert check_feasible(inst, d.alloc, Scheme.SICD).feasible


def test_dual_complementary_slackness():
    inst = build_network(PhysicalConfig(), 3, 2, 60.0, 5)
    d = maxsum.solve_maxsum_sicd_dual(inst)
    dual = d.info["dual"]
    slack = np.cumsum(inst.gamma * d.alloc.tau0, axis=1) - np.cumsum(d.alloc.e, axis=1)
    # lam in bits per J times slack in J is a rate-sized quantity
    assert np.max(dual.lam * slack) <= 1e-4


def test_subgradient_method_runs():
    inst = build_network(PhysicalConfig(), 2, 1, 60.0, 0)
    sol = maxsum.solve_maxsum_sicd_dual(inst, method="subgradient", subgradient_steps=200)
    assert sol.status in (Status.OPTIMAL, Status.ITERATION_LIMIT)
    assert check_feasible(inst, sol.alloc, Scheme.SICD).feasible
    assert sol.info["dual_value"] >= sol.objective - 1e-9
    with pytest.raises(ValueError):
        maxsum.solve_maxsum_sicd_dual(inst, method="nope")
