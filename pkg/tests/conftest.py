import numpy as np
import pytest

from wpcn_noma import NetworkInstance, PhysicalConfig, build_network


@pytest.fixture
def two_user():
    """Two equal users: g = 1e-5, sigma^2 = 3.162e-10, one slot."""
    return NetworkInstance.from_gains([[1e-5], [1e-5]], 1e-3, 3.162e-10)


@pytest.fixture
def small_net():
    return build_network(PhysicalConfig(), 2, 1, 40.0, 0)


def random_instance(rng, k, t, s_th=0.1):
    g = rng.uniform(1e-7, 1e-5, size=(k, t))
    gamma = rng.uniform(1e-4, 1e-3, size=(k, t))
    return NetworkInstance.from_gains(g, gamma, 3.162e-13, s_th)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
