import numpy as np
import pytest

from wpcn_noma import PhysicalConfig, Scheme, Status, build_network, check_feasible, maxmin, maxsum
from wpcn_noma.oracle import GridSpec, Objective, _axis, _run, grid_search


def test_prox_surrogate_construction():
    fn = lambda x: (float(np.sum(np.sin(x))), np.cos(x))
    y = np.array([0.3, -1.2])
    sur = maxmin.prox_surrogate(fn, y)
    val, grad, hess = sur(y)
    assert val == 0.0
    assert np.allclose(grad, np.cos(y))
    assert np.array_equal(hess, np.eye(2))


def test_prox_surrogate_affine_minimizer():
    c = np.array([2.0, -1.0, 0.5])
    fn = lambda x: (float(c @ x + 3.0), c)
    y = np.array([1.0, 1.0, 1.0])
    sur = maxmin.prox_surrogate(fn, y)
    x_star = y - c
    assert np.allclose(sur(x_star)[1], 0.0)
    for d in np.random.default_rng(0).normal(size=(10, 3)):
        assert sur(x_star + 0.1 * d)[0] > sur(x_star)[0]


def test_step_rule_decreases():
    it = maxmin.ScaIterate(np.zeros(2))
    steps = []
    for _ in range(5):
        it.advance(np.ones(2))
        steps.append(it.step)
    assert all(b < a for a, b in zip(steps, steps[1:]))
    assert steps[0] == pytest.approx(maxmin.ZETA0 * (1 - maxmin.DELTA * maxmin.ZETA0))


def test_min_user_ties():
    assert maxmin.min_user(np.array([[1.0, 0.5], [0.5, 2.0]])) == (0, 1)


@pytest.mark.parametrize("scheme", [Scheme.LCD, Scheme.SICD])
def test_given_tau_iterates_feasible(scheme):
    inst = build_network(PhysicalConfig(), 3, 2, 60.0, 1)
    hist, iterates = [], []
    e, r, status = maxmin.solve_maxmin_given_tau(inst, [0.3, 0.3], scheme, history=hist,
                                                  iterates=iterates)
    assert status is not Status.INFEASIBLE and iterates
    assert all(b >= a - 1e-8 for a, b in zip(hist, hist[1:]))
    for alloc in iterates:
        assert check_feasible(inst, alloc, scheme).feasible


def test_given_tau_single_user_equals_maxsum():
    inst = build_network(PhysicalConfig(), 1, 1, 40.0, 0)
    tau = np.array([0.4])
    _, r, _ = maxmin.solve_maxmin_given_tau(inst, tau, Scheme.SICD)
    _, _, s, _ = maxsum.solve_maxsum_lcd_given_tau(inst, tau)
    assert r == pytest.approx(s, rel=1e-4)


def test_given_tau_against_grid():
    inst = build_network(PhysicalConfig(), 2, 1, 40.0, 0)
    _, r, _ = maxmin.solve_maxmin_given_tau(inst, [0.4], Scheme.SICD)
    spec = GridSpec(objective=Objective.MAX_MIN, scheme=Scheme.SICD)
    best, _, _ = _run(inst, spec, [np.array([0.4]), _axis(1e-3), _axis(1e-3)])
    assert r >= 0.98 * best


def test_given_e_zero_energy():
    inst = build_network(PhysicalConfig(s_th_db=None), 2, 1, 40.0, 0)
    tau, r, status = maxmin.solve_maxmin_given_E(inst, np.zeros((2, 1)), Scheme.SICD)
    assert status is not Status.INFEASIBLE and r == 0.0


def test_given_e_scan():
    inst = build_network(PhysicalConfig(s_th_db=None), 2, 1, 40.0, 0)
    e = 0.2 * inst.gamma
    tau, r, _ = maxmin.solve_maxmin_given_E(inst, e, Scheme.SICD)
    grid = np.arange(0.2, 1.0, 1e-4)
    from wpcn_noma import Allocation
    from wpcn_noma.throughput import rates
    scan = max(rates(inst, Allocation([g], e), Scheme.SICD)[1].min() for g in grid)
    assert r == pytest.approx(scan, abs=1e-3)


@pytest.mark.parametrize("scheme", [Scheme.LCD, Scheme.SICD])
def test_full_against_grid(scheme):
    inst = build_network(PhysicalConfig(), 2, 1, 80.0, 2)
    sol = maxmin.solve_maxmin(inst, scheme, trace=True)
    ref = grid_search(inst, GridSpec(objective=Objective.MAX_MIN, scheme=scheme))
    assert sol.objective >= 0.98 * ref.objective
    assert sol.status is Status.APPROXIMATE
    assert all(b >= a - 1e-8 for a, b in zip(sol.history, sol.history[1:]))
    # near-common throughput at the optimum
    assert sol.rates.max() - sol.rates.min() <= 0.02 * sol.rates.max()
    assert all(check_feasible(inst, a, scheme).feasible for a in sol.info["iterates"])


def test_fairness_vs_maxsum():
    inst = build_network(PhysicalConfig(), 4, 2, 60.0, 0)
    ms = maxsum.solve_maxsum_sicd(inst)
    mm = maxmin.solve_maxmin(inst, Scheme.SICD)
    assert mm.min_rate >= ms.min_rate - 1e-8
    assert mm.sum_rate <= ms.sum_rate + 1e-8


def test_infeasible_instance():
    inst = build_network(PhysicalConfig(s_th_db=10.0), 10, 2, 120.0, 0)
    assert maxmin.solve_maxmin(inst, Scheme.LCD).status is Status.INFEASIBLE
