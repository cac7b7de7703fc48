import math

import numpy as np
import pytest

from wpcn_noma.model import (PhysicalConfig, build_network, downlink_gain, harvest_rate,
                             load_physical_config, parse_key_values, uplink_gain)


def test_build_is_deterministic():
    a = build_network(PhysicalConfig(), 5, 2, 60.0, 7)
    b = build_network(PhysicalConfig(), 5, 2, 60.0, 7)
    for name in ("g", "gamma", "h", "positions"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.g.tobytes() == b.g.tobytes()


def test_shapes():
    inst = build_network(PhysicalConfig(), 5, 2, 60.0, 0)
    assert inst.g.shape == (5, 2) and inst.gamma.shape == (5, 2)
    assert inst.k == 5 and inst.t == 2


def test_noise_power_default():
    # -155 dBm/Hz over 1 MHz is -95 dBm
    assert PhysicalConfig().noise_power == pytest.approx(10 ** ((-155 + 60 - 30) / 10), rel=1e-12)
    assert PhysicalConfig().noise_power == pytest.approx(3.162e-13, rel=1e-3)


@pytest.mark.parametrize("d,expected", [(10.0, 1e-5), (1.0, 1e-3), (100.0, 1e-7)])
def test_uplink_gain(d, expected):
    assert uplink_gain(d) == pytest.approx(expected, rel=1e-12)


def test_downlink_gain():
    friis_1m = (299792458.0 / (4 * math.pi * 915e6)) ** 2
    assert friis_1m == pytest.approx(6.80e-4, rel=2e-3)
    assert downlink_gain(1.0, 915e6, 6.0) == pytest.approx(10 ** 0.6 * friis_1m, rel=1e-12)
    friis = (299792458.0 / (4 * math.pi * 915e6 * 3.0)) ** 2
    assert downlink_gain(3.0, 915e6, 0.0) == pytest.approx(friis, rel=1e-12)


def test_harvest_rate():
    assert harvest_rate(0.49, 1e-3, 3.0) == pytest.approx(1.47e-3, rel=1e-12)


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_gain_rejects_nonpositive_distance(bad):
    with pytest.raises(ValueError):
        uplink_gain(bad)
    with pytest.raises(ValueError):
        downlink_gain(bad)


def test_harvest_rate_validation():
    with pytest.raises(ValueError):
        harvest_rate(1.5, 1e-3, 3.0)
    with pytest.raises(ValueError):
        harvest_rate(0.5, 1e-3, 0.0)


def test_build_rejects_bad_sizes():
    with pytest.raises(ValueError):
        build_network(PhysicalConfig(), 0, 1, 10.0, 0)
    with pytest.raises(ValueError):
        build_network(PhysicalConfig(), 2, 1, -1.0, 0)


def test_users_inside_cell_and_floor():
    cfg = PhysicalConfig(cell_radius=10.0)
    inst = build_network(cfg, 20, 1, 0.0, 3)
    d_er, d_ap = inst.distances()
    assert np.all(d_er <= 10.0)
    # d = 0 puts the AP on the ER; the distance floor caps the UL gain
    assert np.all(inst.g <= uplink_gain(cfg.min_distance))


def test_threshold_none_means_zero():
    inst = build_network(PhysicalConfig(s_th_db=None), 3, 1, 20.0, 0)
    assert np.all(inst.s_th == 0)


def test_fading_changes_gains():
    base = build_network(PhysicalConfig(), 3, 4, 20.0, 0)
    faded = build_network(PhysicalConfig(fading=True), 3, 4, 20.0, 0)
    assert not np.allclose(base.g, faded.g)
    assert np.allclose(base.g[:, 0], base.g[:, 3])


def test_parse_key_values_line_numbers():
    with pytest.raises(ValueError, match=":3:"):
        parse_key_values("p_b = 3\n# note\nnot a pair\n", "cfg")


def test_load_physical_config(tmp_path):
    f = tmp_path / "phys.cfg"
    f.write_text("p_b = 2.5  # watts\neta = 0.6\ns_th_db = none\n")
    cfg = load_physical_config(f)
    assert cfg.p_b == 2.5 and cfg.eta == 0.6 and cfg.s_th_db is None
    f.write_text("bogus = 1\n")
    with pytest.raises(ValueError, match="unknown"):
        load_physical_config(f)


def test_config_validation():
    with pytest.raises(ValueError):
        PhysicalConfig(eta=0.0)
    with pytest.raises(ValueError):
        PhysicalConfig(p_b=-1.0)
