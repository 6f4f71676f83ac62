import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_decisions, make_scenario
from sagmec import channel
from sagmec.constants import PhysConfig, get_preset

PHYS = get_preset("paper-table").phys


def test_distance_examples():
    assert channel.distance_device_uav((3, 4), (0, 0), 12) == pytest.approx(13.0, rel=1e-15)
    assert channel.distance_device_uav((7, 7), (7, 7), 50) == 50.0
    assert channel.distance_device_uav((30, 40), (0, 0), 50) == pytest.approx(70.7107, abs=5e-5)


def test_thz_gain_examples():
    assert channel.thz_gain(1.0, PHYS) == pytest.approx(0.01 * math.exp(-0.005), rel=1e-14)
    assert channel.thz_gain(1.0, PHYS) == pytest.approx(9.9501e-3, abs=5e-8)
    no_abs = PhysConfig(absorption=0.0)
    assert channel.thz_gain(2.0, no_abs) == pytest.approx(0.01 / 4, rel=1e-15)
    assert channel.thz_gain(13.0, PHYS) == pytest.approx(5.5448e-5, rel=1e-4)
    with pytest.raises(ValueError):
        channel.thz_gain(0.0, PHYS)


@given(st.floats(min_value=0.5, max_value=5e3), st.floats(min_value=1.01, max_value=10))
def test_thz_gain_decreasing(d, factor):
    assert channel.thz_gain(d * factor, PHYS) < channel.thz_gain(d, PHYS)


def test_sinr_and_rate_examples():
    s2 = 1e-13
    assert channel.sinr_value(s2, 0.0, s2) == 1.0
    assert channel.sinr_value(0.0, 0.0, s2) == 0.0
    assert channel.sinr_value(4 * s2, s2, s2) == pytest.approx(2.0)
    assert channel.rate(1.0, 500.0) == pytest.approx(500.0)
    assert channel.rate(3.0, 500.0) == pytest.approx(1000.0, rel=1e-15)


def _backhaul_oracle(d, P, B, phys):
    snr = P * phys.antenna_gain_tx * phys.antenna_gain_rx * phys.amp_factor * (
        phys.light_speed / (4 * math.pi * d * phys.mm_carrier_hz)) ** 2 / (phys.noise_temp_k * phys.boltzmann * B)
    return B * math.log2(1 + snr)


def test_backhaul_rate_matches_scalar_oracle():
    got = channel.backhaul_rate(200.0, 1.0, PHYS.mm_bandwidth_uav_hz, PHYS)
    assert got == pytest.approx(_backhaul_oracle(200.0, 1.0, PHYS.mm_bandwidth_uav_hz, PHYS), rel=1e-12)
    assert channel.backhaul_rate(200.0, 0.0, 1e6, PHYS) == 0.0


def test_backhaul_doubling_distance_high_snr():
    B = 1.0e6
    R = lambda d: channel.backhaul_rate(d, 1e12, B, PHYS)
    assert R(1.0) - R(2.0) == pytest.approx(2 * B, rel=1e-6)


def test_link_table_shapes_and_rates():
    scn = make_scenario([[10, 10], [500, 500], [20, 30]], [[0, 0], [550, 550]])
    dec = make_decisions(scn, 0.5)
    lt = channel.links(scn, dec)
    assert lt is channel.links(scn, dec)  # cached
    assert lt.gain.shape == (3, 2)
    assert np.all(np.diag(lt.backhaul_uav) == 0)
    # rate recomputed by hand for device 0 (bands 0, 0, 1: devices 0 and 1 share band 0 across cells)
    g = lt.gain
    sig = dec.power[0] * g[0, 0]
    interf = dec.power[1] * g[1, 0]
    R = scn.phys.subband_hz * math.log2(1 + sig / (interf + scn.phys.noise_w))
    assert lt.access_rate[0] == pytest.approx(R, rel=1e-12)
    # same-cell devices on distinct bands do not interfere
    sig2 = dec.power[2] * g[2, 0]
    assert lt.access_rate[2] == pytest.approx(scn.phys.subband_hz * math.log2(1 + sig2 / scn.phys.noise_w), rel=1e-12)


def test_unassigned_device_has_zero_rate():
    scn = make_scenario([[10, 10], [20, 20]], [[0, 0]])
    dec = make_decisions(scn, 0.5, band=[0, -1])
    assert channel.links(scn, dec).access_rate[1] == 0.0


def test_literal_interference_counts_same_cell():
    phys = PhysConfig(literal_interference=True, subband_hz=5e6, noise_w=1e-13)
    scn = make_scenario([[10, 10], [20, 20], [500, 500]], [[0, 0], [550, 550]], phys=phys)
    dec = make_decisions(scn, 0.5, band=[0, 0, 0])
    lt = channel.links(scn, dec)
    g = lt.gain
    P = dec.power
    # K - 1 = 1 copy of every other device on the band
    expect = P[1] * g[1, 0] + P[2] * g[2, 0]
    assert lt.interference[0] == pytest.approx(expect, rel=1e-12)


def test_satellite_propagation_round_trip():
    from sagmec import cost
    scn = make_scenario([[300, 300]], [[300, 300]], sat_alts=(780e3,))
    dec = make_decisions(scn, 0.5)
    lt = channel.links(scn, dec)
    assert lt.sat_distance[0, 0] == pytest.approx(779.95e3, rel=1e-12)
    t = cost.propagation_delay(lt.sat_distance, scn.phys.light_speed)[0, 0]
    assert t == pytest.approx(2 * 779.95e3 / 3e8, rel=1e-12)
    assert t == pytest.approx(5.1997e-3, abs=5e-8)
