import os
import subprocess
import sys

import numpy as np
import pytest

from wpcn_noma import _accel, _kernels


def test_sinr_twins_agree():
    rng = np.random.default_rng(1)
    for _ in range(20):
        k, t = rng.integers(1, 8), rng.integers(1, 5)
        p = rng.uniform(0, 1, (k, t)) * (rng.random((k, t)) > 0.2)
        noise = rng.uniform(0.01, 1, t)
        order = np.stack([rng.permutation(k) for _ in range(t)]).astype(np.int64)
        assert np.allclose(_kernels.sinr_lcd_nb(p, noise), _kernels.sinr_lcd_np(p, noise), rtol=1e-12)
        assert np.allclose(_kernels.sinr_sicd_nb(p, noise, order),
                           _kernels.sinr_sicd_np(p, noise, order), rtol=1e-12)


def test_log_gap_twins_agree():
    b = np.concatenate([[0.0, -1.0], np.geomspace(1e-6, 5.0, 200)])
    assert np.allclose(_kernels.log_gap_root_nb(b, 1e-15), _kernels.log_gap_root_np(b, 1e-15), rtol=1e-12)


@pytest.mark.parametrize("scheme,objective", [(0, 0), (1, 0), (0, 1), (1, 1)])
def test_grid_twins_agree(scheme, objective):
    from wpcn_noma import PhysicalConfig, build_network
    from wpcn_noma.oracle import _axis, _pack
    from wpcn_noma.throughput import decoding_orders

    inst = build_network(PhysicalConfig(), 2, 1, 40.0, 2)
    values, counts = _pack([_axis(0.05) for _ in range(3)])
    args = (values, counts, 2, 1, np.ascontiguousarray(inst.gamma), np.ascontiguousarray(inst.g),
            inst.noise_power, np.ascontiguousarray(inst.s_th), scheme,
            decoding_orders(inst).astype(np.int64), objective)
    a = _kernels.grid_search_nb(*args)
    b = _kernels.grid_search_np(*args)
    assert a[0] == pytest.approx(b[0], rel=1e-12)
    assert list(a[1]) == list(b[1]) and a[2] == b[2]


def test_env_flag_selects_numpy():
    code = ("from wpcn_noma import _accel, _kernels; "
            "print(_accel.USE_NUMBA, _kernels.sinr_lcd is _kernels.sinr_lcd_np)")
    env = dict(os.environ, WPCN_NOMA_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out == ["False", "True"]


def test_default_uses_numba():
    if os.environ.get(_accel.DISABLE_ENV) == "1":
        pytest.skip("numba disabled for this run")
    assert _kernels.sinr_lcd is _kernels.sinr_lcd_nb
