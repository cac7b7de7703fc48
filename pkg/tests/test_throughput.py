import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wpcn_noma import Allocation, NetworkInstance, Scheme, jain_index, rates
from wpcn_noma.throughput import (decoding_order, sinr_lcd, sinr_sicd, sum_rate_sicd_closed,
                                  user_rate)


def test_lcd_zero_energy_gives_zero(two_user):
    x = sinr_lcd(two_user, Allocation([0.5], [[0.0], [1e-3]]))
    assert x[0, 0] == 0.0


def test_lcd_hand_value(two_user):
    x = sinr_lcd(two_user, Allocation([0.5], [[1e-3], [1e-3]]))
    expected = 1e-8 / (3.162e-10 * 0.5 + 1e-8)
    assert np.allclose(x[:, 0], expected, rtol=1e-12)
    assert expected == pytest.approx(0.98444, abs=1e-5)


def test_sicd_hand_value(two_user):
    x = sinr_sicd(two_user, Allocation([0.5], [[1e-3], [1e-3]]), order=[[0, 1]])
    assert x[0, 0] == pytest.approx(0.98444, abs=1e-5)
    assert x[1, 0] == pytest.approx(1e-8 / (3.162e-10 * 0.5), rel=1e-12)
    assert x[1, 0] == pytest.approx(63.25, abs=0.01)


def test_single_user_decoders_agree():
    inst = NetworkInstance.from_gains([[2e-6, 3e-6]], [[1e-3, 1e-3]], 3e-13)
    alloc = Allocation([0.3, 0.6], [[1e-4, 2e-4]])
    assert np.allclose(sinr_lcd(inst, alloc), sinr_sicd(inst, alloc))


def test_bad_order_rejected(two_user):
    alloc = Allocation([0.5], [[1e-3], [1e-3]])
    with pytest.raises(ValueError):
        sinr_sicd(two_user, alloc, order=[[0, 0]])
    with pytest.raises(ValueError):
        sinr_sicd(two_user, alloc, order=[[0, 1, 2]])


def test_user_rate_examples():
    assert user_rate(1.0, 5.0) == 0.0
    assert user_rate(0.3, 0.0) == 0.0
    assert user_rate(0.5, 3.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        user_rate(1.5, 1.0)


def test_closed_sum_rate(two_user):
    alloc = Allocation([0.5], [[1e-3], [1e-3]])
    assert sum_rate_sicd_closed(two_user, Allocation.zeros(2, 1), 0) == 0.0
    _, r = rates(two_user, alloc, Scheme.SICD)
    assert sum_rate_sicd_closed(two_user, alloc, 0) == pytest.approx(r.sum(), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2 ** 31 - 1))
def test_closed_form_independent_of_order(k, seed):
    rng = np.random.default_rng(seed)
    g = rng.uniform(1e-7, 1e-4, size=(k, 1))
    inst = NetworkInstance.from_gains(g, 1e-3, 3e-13)
    alloc = Allocation([rng.uniform(0, 0.95)], rng.uniform(0, 1e-3, size=(k, 1)))
    closed = sum_rate_sicd_closed(inst, alloc, 0)
    for perm in list(permutations(range(k)))[:6]:
        _, r = rates(inst, alloc, Scheme.SICD, order=[list(perm)])
        assert r.sum() == pytest.approx(closed, rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_sicd_dominates_lcd(k, seed):
    rng = np.random.default_rng(seed)
    inst = NetworkInstance.from_gains(rng.uniform(1e-7, 1e-4, size=(k, 2)), 1e-3, 3e-13)
    alloc = Allocation(rng.uniform(0, 0.9, 2), rng.uniform(0, 1e-3, size=(k, 2)))
    assert np.all(sinr_sicd(inst, alloc) >= sinr_lcd(inst, alloc) * (1 - 1e-9))


def test_decoding_order():
    inst = NetworkInstance.from_gains([[1e-5], [3e-5], [2e-5]], 1e-3, 3e-13)
    assert list(decoding_order(inst, 0)) == [1, 2, 0]
    same = NetworkInstance.from_gains([[1e-5]] * 3, 1e-3, 3e-13)
    assert list(decoding_order(same, 0)) == [0, 1, 2]
    desc = NetworkInstance.from_gains([[3e-5], [2e-5], [1e-5]], 1e-3, 3e-13)
    assert list(decoding_order(desc, 0)) == [0, 1, 2]


def test_jain():
    assert jain_index([2.0, 2.0, 2.0]) == pytest.approx(1.0)
    assert jain_index([0.0, 5.0, 0.0, 0.0]) == pytest.approx(0.25)
    assert jain_index([1, 2, 3]) == pytest.approx(36 / 42)
    with pytest.raises(ValueError):
        jain_index([0.0, 0.0])
    with pytest.raises(ValueError):
        jain_index([-1.0, 1.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 1e3), min_size=1, max_size=20).filter(lambda v: max(v) > 1e-100))
def test_jain_bounds(values):
    j = jain_index(values)
    assert 1.0 / len(values) - 1e-12 <= j <= 1.0 + 1e-12


def test_allocation_shape_validation():
    with pytest.raises(ValueError):
        Allocation([0.2, 0.3], [[0.0]])
    assert Allocation([0.5], [1.0, 2.0]).e.shape == (2, 1)


def test_energy_without_transmit_time(two_user):
    with pytest.raises(ValueError):
        sinr_lcd(two_user, Allocation([1.0], [[1e-3], [0.0]]))
