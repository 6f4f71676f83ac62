"""Delay and energy bookkeeping, the objective Q and the constraint checker.

Infeasibility is data: unreachable delays are reported as ``inf`` and every
violated constraint is listed in the report, nothing raises.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import channel
from .decisions import LOCAL, RELAY, SATELLITE, Decisions, executing_uav, route_kind

FEAS_RTOL = 1e-9
INF_PENALTY = 1e9  # stand-in for an unbounded relative excess when summing violations
# Blocks that place a delay exactly on its deadline (split, power) aim for
# deadlines shrunk by this fraction, so the next block starts strictly inside.
SOLVER_MARGIN = 1e-3


def local_cost(data_bits, cycles_per_bit, cpu_hz, chip_coeff, beta):
    """(delay, energy) of computing ``A - beta`` bits on the device."""
    rest = np.subtract(data_bits, beta) * cycles_per_bit
    return rest / cpu_hz, chip_coeff * np.square(cpu_hz) * rest


def tx_cost(beta, rate, power):
    """(delay, energy) of the uplink; infinite delay when bits must cross a dead link."""
    beta = np.asarray(beta, dtype=float)
    rate = np.asarray(rate, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        delay = np.where(beta > 0, np.where(rate > 0, beta / np.where(rate > 0, rate, 1.0), np.inf), 0.0)
    with np.errstate(invalid="ignore"):
        energy = np.where(beta > 0, np.where(np.isinf(delay), np.inf, delay * power), 0.0)
    if delay.ndim == 0:
        return float(delay), float(energy)
    return delay, energy


def link_cost(bits, rate, power):
    """(delay, energy) of pushing an aggregate over a backhaul link."""
    return tx_cost(bits, rate, power)


def propagation_delay(distance, light_speed):
    """Round trip."""
    return 2.0 * np.asarray(distance) / light_speed


def cpu_share(workload, capacity):
    """Proportional CPU split; empty when the total workload is zero."""
    workload = np.asarray(workload, dtype=float)
    total = workload.sum()
    if total <= 0:
        return np.zeros(0)
    return workload / total * capacity


def comp_energy(chip_coeff, share, workload):
    return chip_coeff * np.square(share) * workload


@dataclass(frozen=True, eq=False)
class CostReport:
    local_delay: np.ndarray
    local_energy: np.ndarray
    tx_delay: np.ndarray
    tx_energy: np.ndarray
    comp_delay: np.ndarray
    leg_delay: np.ndarray  # relay or satellite backhaul leg plus propagation
    remote_delay: np.ndarray
    comp_energy_dev: np.ndarray  # compute energy attributed to each device
    uav_comp_energy: np.ndarray
    uav_relay_energy: np.ndarray
    uav_sat_energy: np.ndarray
    uav_total_energy: np.ndarray
    uav_workload: np.ndarray  # cycles executed per UAV
    objective_q: float
    violations: list = field(default_factory=list)
    violation: float = 0.0

    @property
    def feasible(self) -> bool:
        return not self.violations

    @property
    def device_energy(self) -> float:
        return float(self.local_energy.sum() + self.tx_energy.sum())

    @property
    def uav_energy(self) -> float:
        return float(self.uav_total_energy.sum())

    def recompute_q(self) -> float:
        return float(self.local_energy.sum() + self.tx_energy.sum() + self.uav_total_energy.sum())


def aggregates(scn, dec: Decisions):
    """Per-link offloaded bit totals: (relay[K, K], sat[K, S])."""
    K, S = scn.K, scn.S
    kind = route_kind(dec.route, scn.cell, K)
    relay = np.zeros((K, K))
    sat = np.zeros((K, S))
    r = np.flatnonzero((kind == RELAY) & (dec.beta > 0))
    np.add.at(relay, (scn.cell[r], dec.route[r]), dec.beta[r])
    s = np.flatnonzero((kind == SATELLITE) & (dec.beta > 0))
    np.add.at(sat, (scn.cell[s], dec.route[s] - K), dec.beta[s])
    return relay, sat


def objective(scn, dec: Decisions, lt: channel.LinkTable | None = None) -> CostReport:
    """Full cost breakdown and constraint check; deterministic."""
    if lt is None:
        lt = channel.links(scn, dec)
    K, S, J = scn.K, scn.S, scn.J
    beta = dec.beta
    cell = scn.cell
    alpha = scn.cycles_per_bit

    loc_d, loc_e = local_cost(scn.data_bits, alpha, scn.cpu_hz, scn.chip_coeff, beta)
    tx_d, tx_e = tx_cost(beta, lt.access_rate, dec.power)

    kind = route_kind(dec.route, cell, K)
    ex = executing_uav(dec.route, K)
    active = beta > 0
    work = alpha * beta
    uav_work = np.zeros(K)
    on_uav = active & (ex >= 0)
    np.add.at(uav_work, ex[on_uav], work[on_uav])

    comp_d = np.zeros(J)
    comp_e = np.zeros(J)
    idx = np.flatnonzero(on_uav)
    if idx.size:
        n = ex[idx]
        share = work[idx] / uav_work[n] * scn.uav_cpu[n]
        comp_d[idx] = uav_work[n] / scn.uav_cpu[n]
        comp_e[idx] = comp_energy(scn.uav_chip[n], share, work[idx])

    relay_bits, sat_bits = aggregates(scn, dec)
    relay_d, relay_e = link_cost(relay_bits, lt.backhaul_uav, scn.uav_power[:, None])
    sat_d, sat_e = link_cost(sat_bits, lt.backhaul_sat, scn.uav_power[:, None])
    relay_d, relay_e = np.atleast_2d(relay_d), np.atleast_2d(relay_e)
    sat_d, sat_e = np.asarray(sat_d).reshape(K, S), np.asarray(sat_e).reshape(K, S)
    prop = propagation_delay(lt.sat_distance, scn.phys.light_speed)

    leg = np.zeros(J)
    r = np.flatnonzero(active & (kind == RELAY))
    leg[r] = relay_d[cell[r], dec.route[r]]
    s = np.flatnonzero(active & (kind == SATELLITE))
    leg[s] = sat_d[cell[s], dec.route[s] - K] + prop[cell[s], dec.route[s] - K]
    remote = np.where(active, tx_d + leg + comp_d, 0.0)

    uav_comp = np.zeros(K)
    np.add.at(uav_comp, ex[on_uav], comp_e[on_uav])
    uav_relay = relay_e.sum(axis=1)
    uav_sat = sat_e.sum(axis=1) if S else np.zeros(K)
    uav_total = uav_comp + uav_relay + uav_sat
    q = float(loc_e.sum() + tx_e.sum() + uav_total.sum())

    violations, amount = check_constraints(scn, dec, loc_d, remote)
    return CostReport(
        loc_d, loc_e, tx_d, tx_e, comp_d, leg, remote, comp_e, uav_comp, uav_relay, uav_sat, uav_total,
        uav_work, q, violations, amount,
    )


def _excess(delay, limit):
    with np.errstate(invalid="ignore"):
        rel = (delay - limit) / limit
    rel = np.where(np.isinf(delay), INF_PENALTY, rel)
    return np.maximum(rel, 0.0)


def check_constraints(scn, dec: Decisions, local_delay, remote_delay):
    """List of (constraint, index, amount) for every violated constraint, plus a scalar measure."""
    out = []
    phi = scn.deadline
    tol = phi * FEAS_RTOL
    for name, delay in (("local_deadline", local_delay), ("remote_deadline", remote_delay)):
        for j in np.flatnonzero(~(delay <= phi + tol)):
            out.append((name, int(j), float(delay[j] - phi[j])))
    amount = float(_excess(local_delay, phi).sum() + _excess(remote_delay, phi).sum())

    A = scn.data_bits
    for j in np.flatnonzero((dec.beta < 0) | (dec.beta > A)):
        out.append(("split_range", int(j), float(max(-dec.beta[j], dec.beta[j] - A[j]))))
    B = scn.B
    bad_band = (dec.band < -1) | (dec.band >= B)
    for j in np.flatnonzero(bad_band):
        out.append(("band_range", int(j), float(dec.band[j])))
    has = (dec.band >= 0) & ~bad_band
    keys = scn.cell[has] * B + dec.band[has]
    uniq, counts = np.unique(keys, return_counts=True)
    for key, c in zip(uniq, counts):
        if c > 1:
            out.append(("band_conflict", int(key // B), float(key % B)))
    pmax = scn.max_power
    for j in np.flatnonzero((dec.power < 0) | (dec.power > pmax * (1 + FEAS_RTOL))):
        out.append(("power_range", int(j), float(dec.power[j])))
    for j in np.flatnonzero((dec.route < 0) | (dec.route >= scn.K + scn.S)):
        out.append(("route_range", int(j), float(dec.route[j])))
    lo, hi = scn.uav_lo, scn.uav_hi
    for k in np.flatnonzero(np.any((dec.uav_pos < lo - 1e-9) | (dec.uav_pos > hi + 1e-9), axis=1)):
        out.append(("uav_bounds", int(k), 0.0))
    amount += sum(abs(v) for n, _, v in out if n not in ("local_deadline", "remote_deadline"))
    return out, amount


def local_only_energy(scn) -> float:
    """Q when nothing is offloaded."""
    return float((scn.chip_coeff * scn.cpu_hz**2 * scn.cycles_per_bit * scn.data_bits).sum())


__all__ = [
    "LOCAL", "RELAY", "SATELLITE", "CostReport", "objective", "check_constraints", "local_cost", "tx_cost",
    "link_cost", "cpu_share", "comp_energy", "propagation_delay", "aggregates", "local_only_energy",
]
