import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sagmec import constants as c


def test_db_conversions():
    assert c.to_linear(0.0) == 1.0
    assert c.to_linear(-20.0) == pytest.approx(0.01, rel=1e-15)
    assert c.dbm_to_watts(23.0) == pytest.approx(10 ** (-0.7), rel=1e-15)
    assert c.dbm_to_watts(23.0) == pytest.approx(0.19953, abs=5e-6)


@given(st.floats(min_value=-200.0, max_value=200.0))
def test_db_round_trip(x):
    assert c.to_db(c.to_linear(x)) == pytest.approx(x, rel=1e-12, abs=1e-12)
    assert c.watts_to_dbm(c.dbm_to_watts(x)) == pytest.approx(x, rel=1e-12, abs=1e-12)


def test_paper_table_values():
    p = c.get_preset("paper-table")
    ph = p.phys
    assert ph.num_subbands == 25
    assert ph.ref_gain == pytest.approx(0.01)
    assert ph.noise_w == pytest.approx(c.dbm_to_watts(-174.0))
    assert p.deadline_s == 0.5
    assert p.device_max_power_w == pytest.approx(c.dbm_to_watts(23.0))
    assert p.device_cpu_hz == (0.01e6, 0.01e6)
    assert p.device_chip_coeff == 1e-10
    assert ph.subband_hz == 5e2
    assert ph.absorption == 0.005
    assert ph.mm_bandwidth_uav_hz == 1.7e6
    assert ph.mm_bandwidth_sat_hz == 1.8e6
    assert p.uav_tx_power_w == pytest.approx(1.0)
    assert ph.antenna_gain_tx == pytest.approx(c.to_linear(41.0))
    assert ph.antenna_gain_rx == pytest.approx(c.to_linear(41.0))
    assert ph.amp_factor == pytest.approx(c.to_linear(-23.0))
    assert ph.noise_temp_k == 300.0
    assert ph.boltzmann == 1.380649e-23
    assert p.uav_cpu_hz == 3.5e6
    assert ph.mm_carrier_hz == 28e9
    for eps in (p.tolerances.ccp, p.tolerances.sca, p.tolerances.bsum, p.tolerances.bcd):
        assert eps == 1e-4


def test_physical_preset_integrates_noise_over_band():
    ph = c.get_preset("physical").phys
    assert ph.noise_w == pytest.approx(c.dbm_to_watts(-174.0) * ph.subband_hz, rel=1e-12)


def test_unknown_preset():
    with pytest.raises(ValueError, match="unknown preset"):
        c.get_preset("nope")


def test_phys_validation():
    with pytest.raises(ValueError):
        c.PhysConfig(num_subbands=0)
    with pytest.raises(ValueError):
        c.PhysConfig(absorption=-1.0)
    assert math.isfinite(c.PhysConfig().noise_w)
