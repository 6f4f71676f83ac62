import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sagmec import kernels
from sagmec.constants import get_preset
from sagmec.decisions import Decisions
from sagmec.scenario import Device, Satellite, Scenario, Task, Uav

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(params=kernels.available())
def backend(request):
    """Run the test once per available kernel back-end."""
    before = kernels.BACKEND
    kernels.use(request.param)
    yield request.param
    kernels.use(before)


def make_scenario(device_xy, uav_xy, *, cell=None, data_bits=3e5, cycles=30.0, deadline=0.5, cpu=1e9,
                  uav_cpu=3.5e9, pmax=0.2, altitude=50.0, sat_alts=(780e3,), area=600.0, preset="physical",
                  phys=None):
    """Hand-built scenario; scalars broadcast over devices."""
    pre = get_preset(preset)
    phys = phys or pre.phys
    device_xy = np.asarray(device_xy, dtype=float).reshape(-1, 2)
    uav_xy = np.asarray(uav_xy, dtype=float).reshape(-1, 2)
    J, K = len(device_xy), len(uav_xy)

    def per_dev(v):
        return np.broadcast_to(np.asarray(v, dtype=float), (J,))

    A, alpha, phi, f, pm = map(per_dev, (data_bits, cycles, deadline, cpu, pmax))
    devices = tuple(
        Device(j, tuple(device_xy[j]), float(f[j]), pre.device_chip_coeff, float(pm[j]),
               Task(float(phi[j]), float(alpha[j]), float(A[j])))
        for j in range(J)
    )
    box = ((0.0, area), (0.0, area))
    uavs = tuple(Uav(k, tuple(uav_xy[k]), altitude, uav_cpu, pre.uav_chip_coeff, pre.uav_tx_power_w, box)
                 for k in range(K))
    sats = tuple(Satellite(s, (area / 2, area / 2, a), a) for s, a in enumerate(sat_alts))
    if cell is None:
        d = ((device_xy[:, None, :] - uav_xy[None, :, :]) ** 2).sum(axis=2)
        cell = d.argmin(axis=1)
    return Scenario(devices, uavs, sats, tuple(int(c) for c in cell), phys, 0, preset)


def make_decisions(scn, beta=0.0, band=None, power=None, route=None, uav_pos=None):
    """A scalar ``beta`` is a fraction of every task; an array is in bits.
    Default bands are distinct within each cell, powers half of P_max."""
    J = scn.J
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (J,)) * (1.0 if np.ndim(beta) else scn.data_bits)
    if band is None:
        band = np.zeros(J, dtype=int)
        for k in range(scn.K):
            m = scn.cell_members(k)
            band[m] = np.arange(m.size)
    power = scn.max_power / 2 if power is None else power
    return Decisions(beta, band, power, scn.uav_xy if uav_pos is None else uav_pos,
                     scn.cell if route is None else route)


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acc.RESULTS):
        ok, detail = acc.RESULTS[n]
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
