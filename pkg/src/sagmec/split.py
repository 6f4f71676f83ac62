"""Per-device offload split with every other block fixed.

With the UAV CPU shares frozen at the previous iterate, each device's cost
and remote delay are affine in its own split, so the problem separates into
one-dimensional linear programs solved at an interval endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import channel, cost, kernel
from .decisions import RELAY, SATELLITE, Decisions, executing_uav, route_kind


@dataclass(frozen=True, eq=False)
class SplitProblem:
    """Linear model ``slope * beta + const`` on ``[lo, hi]`` per device."""

    slope: np.ndarray  # J/bit: marginal energy of offloading one more bit
    lo: np.ndarray
    hi: np.ndarray
    delay_per_bit: np.ndarray  # s/bit of the remote path
    delay_fixed: np.ndarray  # s of the remote path independent of the own split
    share: np.ndarray  # frozen CPU share at the executing UAV (0 for satellite)


@dataclass(frozen=True, eq=False)
class SplitResult:
    beta: np.ndarray
    problem: SplitProblem
    infeasible: list = field(default_factory=list)  # device ids with an empty interval


def frozen_shares(scn, dec: Decisions) -> np.ndarray:
    """CPU share of each device at its executing UAV, frozen at ``dec``.

    Devices that offloaded nothing get an equal split among the devices that
    could offload to that UAV.
    """
    K = scn.K
    ex = executing_uav(dec.route, K)
    work = scn.cycles_per_bit * dec.beta
    share = np.zeros(scn.J)
    for n in range(K):
        members = np.flatnonzero(ex == n)
        if members.size == 0:
            continue
        W = work[members].sum()
        cand = max(1, int(np.count_nonzero(dec.band[members] >= 0)))
        boot = scn.uav_cpu[n] / cand
        share[members] = np.where(work[members] > 0, work[members] / W * scn.uav_cpu[n] if W > 0 else boot, boot)
    return share


def build_split_problem(scn, dec: Decisions, lt=None, *, include_compute_energy: bool = True,
                        margin: float = cost.SOLVER_MARGIN) -> SplitProblem:
    if lt is None:
        lt = channel.links(scn, dec)
    K = scn.K
    A, alpha, phi = scn.data_bits, scn.cycles_per_bit, scn.deadline
    cell = scn.cell
    kind = route_kind(dec.route, cell, K)
    ex = executing_uav(dec.route, K)
    R = lt.access_rate
    usable = (dec.band >= 0) & (R > 0)

    share = frozen_shares(scn, dec)
    relay_bits, sat_bits = cost.aggregates(scn, dec)
    prop = cost.propagation_delay(lt.sat_distance, scn.phys.light_speed)

    per_bit = np.full(scn.J, np.inf)
    fixed = np.zeros(scn.J)
    energy = np.zeros(scn.J)
    with np.errstate(divide="ignore"):
        per_bit[usable] = 1.0 / R[usable]
    energy[usable] = dec.power[usable] / R[usable]

    on_uav = ex >= 0
    idx = np.flatnonzero(usable & on_uav)
    n = ex[idx]
    per_bit[idx] += alpha[idx] / share[idx]
    if include_compute_energy:
        energy[idx] += scn.uav_chip[n] * share[idx] ** 2 * alpha[idx]

    for j in np.flatnonzero(usable & (kind == RELAY)):
        k, k2 = cell[j], dec.route[j]
        rate = lt.backhaul_uav[k, k2]
        others = relay_bits[k, k2] - dec.beta[j] * (dec.beta[j] > 0)
        if rate <= 0:
            per_bit[j] = np.inf
            continue
        per_bit[j] += 1.0 / rate
        fixed[j] += others / rate
        energy[j] += scn.uav_power[k] / rate
    for j in np.flatnonzero(usable & (kind == SATELLITE)):
        k, s = cell[j], dec.route[j] - K
        rate = lt.backhaul_sat[k, s]
        others = sat_bits[k, s] - dec.beta[j] * (dec.beta[j] > 0)
        if rate <= 0:
            per_bit[j] = np.inf
            continue
        per_bit[j] += 1.0 / rate
        fixed[j] += others / rate + prop[k, s]
        energy[j] += scn.uav_power[k] / rate

    slope = energy - scn.chip_coeff * scn.cpu_hz**2 * alpha
    lo = np.maximum(0.0, A - scn.cpu_hz * phi / alpha)
    with np.errstate(invalid="ignore", divide="ignore"):
        cap = np.where(np.isfinite(per_bit), (phi * (1.0 - margin) - fixed) / per_bit, 0.0)
        true_cap = np.where(np.isfinite(per_bit), (phi - fixed) / per_bit, 0.0)
    # the margin only holds back growth; a split that already fits the true deadline stays allowed
    cap = np.maximum(cap, np.minimum(dec.beta, true_cap))
    hi = np.clip(cap, 0.0, A)
    return SplitProblem(slope, lo, hi, per_bit, fixed, share)


def solve_split(scn, dec: Decisions, lt=None, *, include_compute_energy: bool = True,
                margin: float = cost.SOLVER_MARGIN) -> SplitResult:
    """Endpoint solution of every device's 1-D program; ties go to the smaller split.

    Devices whose interval is empty keep their incoming split and are listed
    in ``infeasible``.
    """
    prob = build_split_problem(scn, dec, lt, include_compute_energy=include_compute_energy, margin=margin)
    beta = np.where(prob.slope < 0, prob.hi, prob.lo)
    bad = prob.lo > prob.hi * (1 + 1e-12)
    beta = np.where(bad, dec.beta, beta)
    return SplitResult(beta, prob, [int(j) for j in np.flatnonzero(bad)])


def linear_objective(prob: SplitProblem, beta) -> float:
    """Frozen-share model objective up to a constant."""
    return float(np.dot(prob.slope, beta))


def solve_split_refined(scn, dec: Decisions, rounds: int = 4, **kwargs) -> SplitResult:
    """Repeat :func:`solve_split` with the shares re-frozen at each candidate.

    The frozen-share model misprices compute energy when the split moves a
    lot (shares follow workloads). Each round freezes the shares at the
    previous round's candidate; the candidate with the lowest true objective
    wins, and the incoming split is kept when none improves on it.
    """
    base = cost.objective(scn, dec)
    best_key = (0.0, base.objective_q) if base.feasible else (1.0, base.violation)
    best = SplitResult(np.array(dec.beta), build_split_problem(scn, dec, **kwargs))
    cur = dec
    for _ in range(rounds):
        res = solve_split(scn, cur, **kwargs)
        cand = dec.evolve(beta=res.beta)
        rep = cost.objective(scn, cand)
        key = (0.0, rep.objective_q) if rep.feasible else (1.0, rep.violation)
        if key < best_key:
            best, best_key = res, key
        if np.array_equal(res.beta, cur.beta):
            break
        cur = cur.evolve(beta=res.beta)
    return best


JOINT_ITER = 200


@dataclass(frozen=True, eq=False)
class JointSplitModel:
    """Exact split program with rates, powers and routes fixed.

    Every remote delay is affine in the split vector (``d0 + M @ beta``) and
    the objective is affine plus the UAV compute energy ``c_n * sum w^3 / W^2``,
    which is convex, so the problem is a convex program over all devices at once.
    """

    free: np.ndarray  # device ids optimised
    d0: np.ndarray  # (m,) remote delay at beta_free = 0
    M: np.ndarray  # (m, m) delay per bit
    cap: np.ndarray  # (m,) delay limits
    linear: np.ndarray  # (m,) J/bit excluding UAV compute
    const: float  # energy of the fixed devices and of beta_free = 0 (no UAV compute)
    groups: list  # (UAV chip * F^2, cycles/bit, positions in free) per UAV
    fixed_work: np.ndarray  # (K,) cycles from fixed devices at each UAV
    lo: np.ndarray
    hi: np.ndarray

    def energy(self, beta):
        e = self.const + float(self.linear @ beta)
        g = self.linear.copy()
        for n, (c, alpha, pos) in enumerate(self.groups):
            w = alpha * beta[pos]
            W = w.sum() + self.fixed_work[n]
            if W <= 0:
                g[pos] += c * alpha
                continue
            cube = float(np.sum(w**3))  # fixed devices are idle, so they add no cubes
            e += c * cube / W**2
            g[pos] += c * alpha * (3.0 * w**2 / W**2 - 2.0 * cube / W**3)
        return e, g

    def delay(self, beta):
        return self.d0 + self.M @ beta


def build_joint_model(scn, dec: Decisions, lt=None, *, margin: float = cost.SOLVER_MARGIN):
    """Affine delay model around ``dec``; devices that cannot send, or whose
    delay already exceeds the deadline with nothing offloaded, stay at their split."""
    if lt is None:
        lt = channel.links(scn, dec)
    K = scn.K
    A, alpha, phi = scn.data_bits, scn.cycles_per_bit, scn.deadline
    cell = scn.cell
    kind = route_kind(dec.route, cell, K)
    ex = executing_uav(dec.route, K)
    R = lt.access_rate
    usable = (dec.band >= 0) & (R > 0)
    J = scn.J
    # full (J, J) affine delay model in beta
    M = np.zeros((J, J))
    d0 = np.zeros(J)
    lin = -scn.chip_coeff * scn.cpu_hz**2 * alpha  # local energy saved per bit
    const = float(np.sum(scn.chip_coeff * scn.cpu_hz**2 * alpha * A))
    ok = usable.copy()
    for j in range(J):
        if not usable[j]:
            continue
        M[j, j] += 1.0 / R[j]
        lin = lin.copy()
        lin[j] += dec.power[j] / R[j]
        if ex[j] >= 0:
            same = ex == ex[j]
            M[j, same] += alpha[same] / scn.uav_cpu[ex[j]]
        if kind[j] == RELAY:
            rate = lt.backhaul_uav[cell[j], dec.route[j]]
            link = (kind == RELAY) & (cell == cell[j]) & (dec.route == dec.route[j])
        elif kind[j] == SATELLITE:
            rate = lt.backhaul_sat[cell[j], dec.route[j] - K]
            link = (kind == SATELLITE) & (cell == cell[j]) & (dec.route == dec.route[j])
            d0[j] += cost.propagation_delay(lt.sat_distance, scn.phys.light_speed)[cell[j], dec.route[j] - K]
        else:
            continue
        if rate <= 0:
            ok[j] = False
            continue
        M[j, link] += 1.0 / rate
        lin[j] += scn.uav_power[cell[j]] / rate
    free = np.flatnonzero(ok)
    fixed = np.flatnonzero(~ok)
    beta_fixed = dec.beta[fixed]
    d0 = d0[free] + M[np.ix_(free, fixed)] @ beta_fixed
    Mf = M[np.ix_(free, free)]
    start = d0 + Mf @ dec.beta[free]
    cap = np.maximum(phi[free] * (1.0 - margin), np.minimum(start, phi[free]))
    const += float(lin[fixed] @ beta_fixed)
    groups = []
    fixed_work = np.zeros(K)
    for n in range(K):
        pos = np.flatnonzero(ex[free] == n)
        groups.append((scn.uav_chip[n] * scn.uav_cpu[n] ** 2, alpha[free][pos], pos))
        fixed_work[n] = float(np.sum(alpha[fixed] * beta_fixed * (ex[fixed] == n)))
    lo = np.maximum(0.0, A - scn.cpu_hz * phi / alpha)[free]
    return JointSplitModel(free, d0, Mf, cap, lin[free], const, groups, fixed_work, lo, A[free].astype(float))


def solve_split_joint(scn, dec: Decisions, lt=None, *, margin: float = cost.SOLVER_MARGIN,
                      max_iter: int = JOINT_ITER, tol: float = 1e-9):
    """Solve the exact split program from ``dec.beta``; ``None`` when the start
    is not strictly inside (the caller keeps its own split then).

    Fixed devices must be idle (zero split); this holds for every device
    that has no usable access link.
    """
    mdl = build_joint_model(scn, dec, lt, margin=margin)
    if mdl.free.size == 0:
        return None
    fixed = np.setdiff1d(np.arange(scn.J), mdl.free)
    if np.any(dec.beta[fixed] > 0):
        return None
    A = mdl.hi
    x0 = np.clip(dec.beta[mdl.free] / A * (1.0 - 1e-6), mdl.lo / A, 1.0)
    q0 = max(mdl.energy(x0 * A)[0], 1e-300)

    def obj(x):
        e, g = mdl.energy(x * A)
        return e / q0, g * A / q0

    def cons(x):
        return mdl.delay(x * A) / mdl.cap - 1.0, mdl.M * A[None, :] / mdl.cap[:, None]

    prog = kernel.ConvexProgram(mdl.free.size, obj, mdl.lo / A, 1.0, constraints=cons)
    res = kernel.solve(prog, x0, tol=tol, max_iter=max_iter)
    if res.status == kernel.INFEASIBLE_START:
        return None
    beta = np.array(dec.beta, dtype=float)
    beta[mdl.free] = np.clip(res.x * A, mdl.lo, A)
    # barrier iterates carry tiny positive splits where zero is optimal
    beta[beta < 1e-9 * scn.data_bits] = 0.0
    return beta
