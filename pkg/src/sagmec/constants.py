"""Physical constants, unit conversions and the named parameter presets.

Two presets ship:

``paper-table``
    The simulation table verbatim. Useful for formula-level regression only:
    with a 0.01 MHz device CPU and a 500 Hz sub-band every deadline is
    unreachable.
``physical``
    Same geometry and link budget, but with magnitudes that describe real
    hardware (1 GHz devices, 3.5 GHz UAV servers, kappa = 1e-28, 5 MHz
    sub-bands). Every trend experiment uses this one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

BOLTZMANN = 1.380649e-23  # J/K
LIGHT_SPEED = 3.0e8  # m/s


def to_linear(db_value):
    """dB -> linear power ratio."""
    return np.power(10.0, np.divide(db_value, 10.0))


def to_db(linear):
    return 10.0 * np.log10(linear)


def dbm_to_watts(dbm):
    return np.power(10.0, np.divide(np.subtract(dbm, 30.0), 10.0))


def watts_to_dbm(watts):
    return 10.0 * np.log10(watts) + 30.0


@dataclass(frozen=True)
class PhysConfig:
    """Link-level constants shared by every entity of a scenario."""

    num_subbands: int = 25
    subband_hz: float = 5.0e2
    ref_gain: float = 0.01  # g0 at 1 m
    absorption: float = 0.005  # molecular absorption, 1/m
    noise_w: float = dbm_to_watts(-174.0)
    mm_carrier_hz: float = 28.0e9
    mm_bandwidth_uav_hz: float = 1.7e6
    mm_bandwidth_sat_hz: float = 1.8e6
    antenna_gain_tx: float = to_linear(41.0)
    antenna_gain_rx: float = to_linear(41.0)
    amp_factor: float = to_linear(-23.0)
    noise_temp_k: float = 300.0
    boltzmann: float = BOLTZMANN
    light_speed: float = LIGHT_SPEED
    match_weight: float = 1.0
    interference_weight: float = 1.0e-2
    # Count every other device on the band (Eq. 9 taken literally) instead of
    # other-cell devices only.
    literal_interference: bool = False
    # UAVs keep at least this horizontal spacing while being placed
    min_uav_separation_m: float = 10.0

    def __post_init__(self):
        if int(self.num_subbands) < 1:
            raise ValueError("num_subbands must be >= 1")
        for name in (
            "subband_hz", "ref_gain", "noise_w", "mm_carrier_hz", "mm_bandwidth_uav_hz",
            "mm_bandwidth_sat_hz", "antenna_gain_tx", "antenna_gain_rx", "amp_factor",
            "noise_temp_k", "boltzmann", "light_speed", "match_weight",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.absorption < 0 or self.interference_weight < 0 or self.min_uav_separation_m < 0:
            raise ValueError("absorption, interference_weight and min_uav_separation_m must be non-negative")


@dataclass(frozen=True)
class Tolerances:
    ccp: float = 1e-4
    sca: float = 1e-4
    bsum: float = 1e-4
    bcd: float = 1e-4


@dataclass(frozen=True)
class Preset:
    """A PhysConfig plus per-entity defaults used by scenario generation."""

    name: str
    phys: PhysConfig
    device_cpu_hz: tuple[float, float]
    device_chip_coeff: float
    device_max_power_w: float
    deadline_s: float
    uav_cpu_hz: float
    uav_chip_coeff: float
    uav_tx_power_w: float
    uav_altitude_m: float
    sat_altitudes_m: tuple[float, float] = (780.0e3, 800.0e3)
    data_bits: tuple[float, float] = (0.1e6, 0.5e6)
    cycles_per_bit: tuple[float, float] = (10.0, 50.0)
    tolerances: Tolerances = field(default_factory=Tolerances)


PAPER_TABLE = Preset(
    name="paper-table",
    phys=PhysConfig(),
    device_cpu_hz=(0.01e6, 0.01e6),
    device_chip_coeff=1e-10,
    device_max_power_w=dbm_to_watts(23.0),
    deadline_s=0.5,
    uav_cpu_hz=3.5e6,
    uav_chip_coeff=1e-10,
    uav_tx_power_w=dbm_to_watts(30.0),
    uav_altitude_m=50.0,
)

PHYSICAL = replace(
    PAPER_TABLE,
    name="physical",
    # -174 dBm is a density; integrate it over the 5 MHz sub-band.
    phys=replace(PAPER_TABLE.phys, subband_hz=5.0e6, noise_w=dbm_to_watts(-174.0 + 10.0 * math.log10(5.0e6))),
    device_cpu_hz=(0.5e9, 1.5e9),
    device_chip_coeff=1e-28,
    uav_cpu_hz=3.5e9,
    uav_chip_coeff=1e-28,
)

PRESETS = {p.name: p for p in (PAPER_TABLE, PHYSICAL)}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
