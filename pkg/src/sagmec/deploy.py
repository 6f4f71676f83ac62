"""Horizontal UAV placement by successive convex approximation.

With splits, bands, powers and routes fixed, only the location-dependent
costs move: uplink transmit energy, backhaul energy and the delays that feed
each deadline. Every rate is rewritten as a function of a squared distance
and replaced by a concave minorant tangent at the anchor:

* access rate: first-order expansion in the squared distance to the own
  device (the rate is convex in it), plus the linearised squared distances
  to interferers;
* backhaul rates: first-order expansion in the squared link length (convex,
  decreasing), with the exact squared length substituted;
* satellite propagation distance: tangent of the concave square root, an
  upper bound.

``const / concave`` is convex, so each subproblem is a smooth convex program
in the positions, solved with :mod:`sagmec.kernel` inside a trust region.
The per-leg delay variables collapse into one constraint per device (their
sum must fit the deadline) and the distance slacks are substituted exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import channel, cost, kernel
from .decisions import RELAY, SATELLITE, Decisions, route_kind

LN2 = math.log(2.0)
MAX_ITER = 50
TRUST_RADIUS_M = 100.0
MIN_RADIUS_M = 1e-3
UNIT_M = 100.0  # solver works in units of 100 m
KERNEL_ITER = 40  # per barrier stage; steps are vetted on the true objective anyway


def sq_dist_minorant(anchor, point, o):
    """Affine minorant of ``||o - point||^2`` tangent at ``anchor``."""
    a = np.asarray(anchor, dtype=float)
    p = np.asarray(point, dtype=float)
    return float(np.sum((a - p) ** 2) + 2.0 * np.dot(a - p, np.asarray(o, dtype=float) - a))


def _gain_and_slope(s, h2, phys):
    """THz gain as a function of squared horizontal distance, and d gain / d s."""
    d = np.sqrt(s + h2)
    g = channel.thz_gain(d, phys)
    return g, g * (-phys.absorption / (2.0 * d) - 1.0 / (d * d))


@dataclass
class PlacementModel:
    """Fixed data of the placement problem for one set of decisions."""

    scn: object
    K: int
    # active devices (offloading with a band)
    dev: np.ndarray
    uav: np.ndarray
    xy: np.ndarray
    power: np.ndarray
    beta: np.ndarray
    h2: np.ndarray
    fixed_delay: np.ndarray  # compute delay, independent of positions
    deadline: np.ndarray
    # interferer pairs: row of the victim, interferer position, weight (multiplicity * power)
    pair_row: np.ndarray
    pair_xy: np.ndarray
    pair_w: np.ndarray
    # backhaul links carrying bits
    relay: np.ndarray  # (nr, 2) uav pairs
    relay_bits: np.ndarray
    relay_gamma: np.ndarray  # SNR * squared length
    relay_dh2: np.ndarray
    sat: np.ndarray  # (ns, 2) (uav, satellite)
    sat_bits: np.ndarray
    sat_gamma: np.ndarray
    sat_dh2: np.ndarray
    sat_xy: np.ndarray
    # leg of each active device (-1 if none)
    leg_relay: np.ndarray
    leg_sat: np.ndarray

    @property
    def m(self) -> int:
        return self.dev.size

    @property
    def uav_power(self):
        return self.scn.uav_power

    # ---- exact location-dependent quantities
    def access_rate(self, o):
        phys = self.scn.phys
        s = np.sum((o[self.uav] - self.xy) ** 2, axis=1)
        g, _ = _gain_and_slope(s, self.h2, phys)
        D = np.full(self.m, phys.noise_w)
        if self.pair_row.size:
            t = np.sum((o[self.uav[self.pair_row]] - self.pair_xy) ** 2, axis=1)
            gi, _ = _gain_and_slope(t, self.h2[self.pair_row], phys)
            np.add.at(D, self.pair_row, self.pair_w * gi)
        return phys.subband_hz * np.log2(1.0 + self.power * g / D)

    def relay_u(self, o):
        k, k2 = self.relay[:, 0], self.relay[:, 1]
        return np.sum((o[k] - o[k2]) ** 2, axis=1) + self.relay_dh2

    def sat_u(self, o):
        return np.sum((o[self.sat[:, 0]] - self.sat_xy) ** 2, axis=1) + self.sat_dh2

    def relay_rate(self, o):
        return self.scn.phys.mm_bandwidth_uav_hz * np.log2(1.0 + self.relay_gamma / self.relay_u(o))

    def sat_rate(self, o):
        return self.scn.phys.mm_bandwidth_sat_hz * np.log2(1.0 + self.sat_gamma / self.sat_u(o))

    def sat_distance(self, o):
        return np.sqrt(self.sat_u(o))

    def energy(self, Racc, Rrel, Rsat):
        """Location-dependent part of the objective."""
        e = np.sum(self.power * self.beta / Racc)
        if self.relay.size:
            e += np.sum(self.uav_power[self.relay[:, 0]] * self.relay_bits / Rrel)
        if self.sat.size:
            e += np.sum(self.uav_power[self.sat[:, 0]] * self.sat_bits / Rsat)
        return float(e)

    def delays(self, Racc, Rrel, Rsat, dsat):
        out = self.beta / Racc + self.fixed_delay
        r = self.leg_relay >= 0
        out[r] += self.relay_bits[self.leg_relay[r]] / Rrel[self.leg_relay[r]]
        s = self.leg_sat >= 0
        i = self.leg_sat[s]
        out[s] += self.sat_bits[i] / Rsat[i] + 2.0 * dsat[i] / self.scn.phys.light_speed
        return out

    def true_energy(self, o):
        return self.energy(self.access_rate(o), self.relay_rate(o), self.sat_rate(o))


def build_model(scn, dec: Decisions, report=None) -> PlacementModel:
    if report is None:
        report = cost.objective(scn, dec)
    K, phys = scn.K, scn.phys
    cell, band = scn.cell, dec.band
    has = band >= 0
    dev = np.flatnonzero(has & (dec.beta > 0))
    uav = cell[dev]
    lit = phys.literal_interference
    rows, pxy, pw = [], [], []
    senders = np.flatnonzero(has & (dec.power > 0))
    for r, j in enumerate(dev):
        same = senders[band[senders] == band[j]]
        if lit:
            same = same[same != j]
            mult = K - 1
        else:
            same = same[cell[same] != cell[j]]
            mult = 1
        rows.extend([r] * same.size)
        pxy.extend(scn.device_xy[same])
        pw.extend(mult * dec.power[same])

    kind = route_kind(dec.route, cell, K)
    relay_bits, sat_bits = cost.aggregates(scn, dec)
    relay = np.argwhere(relay_bits > 0)
    sat = np.argwhere(sat_bits > 0)
    alt = scn.uav_alt
    g_uu = channel.mm_snr(1.0, scn.uav_power[relay[:, 0]], phys.mm_bandwidth_uav_hz, phys) if relay.size else []
    g_us = channel.mm_snr(1.0, scn.uav_power[sat[:, 0]], phys.mm_bandwidth_sat_hz, phys) if sat.size else []
    leg_relay = np.full(dev.size, -1)
    leg_sat = np.full(dev.size, -1)
    rindex = {(int(a), int(b)): i for i, (a, b) in enumerate(relay)}
    sindex = {(int(a), int(b)): i for i, (a, b) in enumerate(sat)}
    for r, j in enumerate(dev):
        if kind[j] == RELAY:
            leg_relay[r] = rindex[(int(cell[j]), int(dec.route[j]))]
        elif kind[j] == SATELLITE:
            leg_sat[r] = sindex[(int(cell[j]), int(dec.route[j] - K))]
    sat_pos = scn.sat_pos
    return PlacementModel(
        scn=scn, K=K, dev=dev, uav=uav, xy=scn.device_xy[dev], power=dec.power[dev], beta=dec.beta[dev],
        h2=alt[uav] ** 2, fixed_delay=report.comp_delay[dev], deadline=scn.deadline[dev],
        pair_row=np.asarray(rows, dtype=np.int64), pair_xy=np.asarray(pxy, dtype=float).reshape(-1, 2),
        pair_w=np.asarray(pw, dtype=float),
        relay=relay.reshape(-1, 2), relay_bits=relay_bits[relay[:, 0], relay[:, 1]],
        relay_gamma=np.asarray(g_uu, dtype=float), relay_dh2=(alt[relay[:, 0]] - alt[relay[:, 1]]) ** 2,
        sat=sat.reshape(-1, 2), sat_bits=sat_bits[sat[:, 0], sat[:, 1]], sat_gamma=np.asarray(g_us, dtype=float),
        sat_dh2=(sat_pos[sat[:, 1], 2] - alt[sat[:, 0]]) ** 2, sat_xy=sat_pos[sat[:, 1], :2].reshape(-1, 2),
        leg_relay=leg_relay, leg_sat=leg_sat,
    )


class Surrogate:
    """Concave rate minorants and a distance majorant, tangent at ``anchor``.

    ``access(o)``, ``relay(o)``, ``sat(o)`` return (value, gradient wrt the
    moving UAV positions); ``sat_distance(o)`` likewise.
    """

    def __init__(self, model: PlacementModel, anchor):
        self.model = model
        self.anchor = a = np.array(anchor, dtype=float)
        phys = model.scn.phys
        mdl = model
        # access
        s0 = np.sum((a[mdl.uav] - mdl.xy) ** 2, axis=1)
        g0, dg0 = _gain_and_slope(s0, mdl.h2, phys)
        D0 = np.full(mdl.m, phys.noise_w)
        if mdl.pair_row.size:
            t0 = np.sum((a[mdl.uav[mdl.pair_row]] - mdl.pair_xy) ** 2, axis=1)
            gi, dgi = _gain_and_slope(t0, mdl.h2[mdl.pair_row], phys)
            np.add.at(D0, mdl.pair_row, mdl.pair_w * gi)
        S0 = D0 + mdl.power * g0
        w = phys.subband_hz
        self.R0 = w * np.log2(1.0 + mdl.power * g0 / D0)
        self.s0 = s0
        self.a_own = w * mdl.power * dg0 / (LN2 * S0)  # <= 0
        if mdl.pair_row.size:
            r = mdl.pair_row
            self.a_pair = w * mdl.pair_w * dgi * (1.0 / (LN2 * S0[r]) - 1.0 / (LN2 * D0[r]))  # >= 0
            self.pair_dir = 2.0 * (a[mdl.uav[r]] - mdl.pair_xy)
        # backhaul: dR/du at the anchor
        self.u_rel0 = mdl.relay_u(a)
        self.R_rel0 = mdl.relay_rate(a)
        self.b_rel = -phys.mm_bandwidth_uav_hz * mdl.relay_gamma / (LN2 * self.u_rel0 * (self.u_rel0 + mdl.relay_gamma))
        self.u_sat0 = mdl.sat_u(a)
        self.R_sat0 = mdl.sat_rate(a)
        self.b_sat = -phys.mm_bandwidth_sat_hz * mdl.sat_gamma / (LN2 * self.u_sat0 * (self.u_sat0 + mdl.sat_gamma))
        self.d_sat0 = np.sqrt(self.u_sat0)

    def access(self, o):
        mdl = self.model
        diff = o[mdl.uav] - mdl.xy
        s = np.sum(diff**2, axis=1)
        val = self.R0 + self.a_own * (s - self.s0)
        grad = 2.0 * self.a_own[:, None] * diff  # wrt o[uav]
        if mdl.pair_row.size:
            r = mdl.pair_row
            step = np.sum(self.pair_dir * (o[mdl.uav[r]] - self.anchor[mdl.uav[r]]), axis=1)
            np.add.at(val, r, self.a_pair * step)
            np.add.at(grad, r, self.a_pair[:, None] * self.pair_dir)
        return val, grad

    def relay(self, o):
        mdl = self.model
        k, k2 = mdl.relay[:, 0], mdl.relay[:, 1]
        diff = o[k] - o[k2]
        u = np.sum(diff**2, axis=1) + mdl.relay_dh2
        return self.R_rel0 + self.b_rel * (u - self.u_rel0), 2.0 * self.b_rel[:, None] * diff  # grad wrt o[k]; -grad wrt o[k2]

    def sat(self, o):
        mdl = self.model
        diff = o[mdl.sat[:, 0]] - mdl.sat_xy
        u = np.sum(diff**2, axis=1) + mdl.sat_dh2
        return self.R_sat0 + self.b_sat * (u - self.u_sat0), 2.0 * self.b_sat[:, None] * diff

    def sat_distance(self, o):
        mdl = self.model
        diff = o[mdl.sat[:, 0]] - mdl.sat_xy
        u = np.sum(diff**2, axis=1) + mdl.sat_dh2
        return self.d_sat0 + (u - self.u_sat0) / (2.0 * self.d_sat0), diff / self.d_sat0[:, None]

    # ---- convex program pieces (positions flattened, meters)
    def energy(self, o):
        """(surrogate location-dependent energy, gradient (K, 2)); inf outside the surrogate's domain."""
        mdl = self.model
        K = mdl.K
        grad = np.zeros((K, 2))
        Ra, ga = self.access(o)
        Rr, gr = self.relay(o)
        Rs, gs = self.sat(o)
        if np.any(Ra <= 0) or np.any(Rr <= 0) or np.any(Rs <= 0):
            return np.inf, grad
        ca = mdl.power * mdl.beta
        np.add.at(grad, mdl.uav, -(ca / Ra**2)[:, None] * ga)
        e = np.sum(ca / Ra)
        if mdl.relay.size:
            cr = mdl.uav_power[mdl.relay[:, 0]] * mdl.relay_bits
            t = -(cr / Rr**2)[:, None] * gr
            np.add.at(grad, mdl.relay[:, 0], t)
            np.add.at(grad, mdl.relay[:, 1], -t)
            e += np.sum(cr / Rr)
        if mdl.sat.size:
            cs = mdl.uav_power[mdl.sat[:, 0]] * mdl.sat_bits
            np.add.at(grad, mdl.sat[:, 0], -(cs / Rs**2)[:, None] * gs)
            e += np.sum(cs / Rs)
        return float(e), grad

    def delay_constraints(self, o):
        """(delay / deadline - 1 per active device, jacobian (m, K, 2))."""
        mdl = self.model
        m, K = mdl.m, mdl.K
        jac = np.zeros((m, K, 2))
        Ra, ga = self.access(o)
        Rr, gr = self.relay(o)
        Rs, gs = self.sat(o)
        if np.any(Ra <= 0) or np.any(Rr <= 0) or np.any(Rs <= 0):
            return np.full(m, np.inf), jac
        rows = np.arange(m)
        val = mdl.beta / Ra + mdl.fixed_delay
        jac[rows, mdl.uav] += -(mdl.beta / Ra**2)[:, None] * ga
        r = np.flatnonzero(mdl.leg_relay >= 0)
        if r.size:
            i = mdl.leg_relay[r]
            val[r] += mdl.relay_bits[i] / Rr[i]
            t = -(mdl.relay_bits[i] / Rr[i] ** 2)[:, None] * gr[i]
            jac[r, mdl.relay[i, 0]] += t
            jac[r, mdl.relay[i, 1]] -= t
        s = np.flatnonzero(mdl.leg_sat >= 0)
        if s.size:
            i = mdl.leg_sat[s]
            d, gd = self.sat_distance(o)
            c = mdl.scn.phys.light_speed
            val[s] += mdl.sat_bits[i] / Rs[i] + 2.0 * d[i] / c
            jac[s, mdl.sat[i, 0]] += -(mdl.sat_bits[i] / Rs[i] ** 2)[:, None] * gs[i] + 2.0 * gd[i] / c
        phi = mdl.deadline
        return val / phi - 1.0, jac / phi[:, None, None]


@dataclass
class DeployResult:
    uav_pos: np.ndarray
    status: str  # converged / iteration-limit / stalled / empty
    iterations: int
    trace: list = field(default_factory=list)


def _true_q(scn, dec, o):
    rep = cost.objective(scn, dec.evolve(uav_pos=o))
    return rep.objective_q, rep.feasible


def separation_rows(model: PlacementModel, anchor):
    """Linearised spacing constraints between every UAV pair, or None.

    The squared spacing is replaced by its tangent minorant, so any point
    meeting the rows keeps the true spacing. Pairs already closer than the
    minimum may not get any closer.
    """
    K = model.K
    dmin2 = model.scn.phys.min_uav_separation_m ** 2
    if K < 2 or dmin2 <= 0:
        return None
    a = np.asarray(anchor, dtype=float)
    i, j = np.triu_indices(K, 1)
    diff = a[i] - a[j]
    s0 = np.sum(diff**2, axis=1)
    need = np.minimum(dmin2, s0 * (1.0 - 1e-9))
    rows = np.arange(i.size)

    def sep(o):
        # need - minorant <= 0, scaled by need
        lin = s0 + 2.0 * np.sum(diff * ((o[i] - o[j]) - diff), axis=1)
        jac = np.zeros((i.size, K, 2))
        jac[rows, i] = -2.0 * diff
        jac[rows, j] = 2.0 * diff
        scale = np.maximum(need, 1e-12)
        return (need - lin) / scale, jac.reshape(i.size, 2 * K) * UNIT_M / scale[:, None]

    return sep


def solve_subproblem(model: PlacementModel, anchor, radius: float, q_rest: float):
    """Minimise the surrogate objective within ``radius`` of ``anchor``; (o, surrogate Q) or (None, None)."""
    scn = model.scn
    K = model.K
    sur = Surrogate(model, anchor)
    lo = np.maximum(scn.uav_lo, anchor - radius) / UNIT_M
    hi = np.minimum(scn.uav_hi, anchor + radius) / UNIT_M
    lo, hi = np.minimum(lo, anchor / UNIT_M), np.maximum(hi, anchor / UNIT_M)
    e0, _ = sur.energy(anchor)
    norm = max(e0, 1e-300)

    def obj(z):
        e, g = sur.energy(z.reshape(K, 2) * UNIT_M)
        return e / norm, g.ravel() * UNIT_M / norm

    sep = separation_rows(model, anchor)
    cons = None
    if model.m or sep is not None:
        def cons(z):
            o = z.reshape(K, 2) * UNIT_M
            parts = []
            if model.m:
                v, jac = sur.delay_constraints(o)
                parts.append((v, jac.reshape(model.m, 2 * K) * UNIT_M))
            if sep is not None:
                parts.append(sep(o))
            return np.concatenate([p[0] for p in parts]), np.vstack([p[1] for p in parts])

    prog = kernel.ConvexProgram(2 * K, obj, lo.ravel(), hi.ravel(), constraints=cons)
    res = kernel.solve(prog, (anchor / UNIT_M).ravel(), tol=1e-7, max_iter=KERNEL_ITER)
    if res.status == kernel.INFEASIBLE_START:
        return None, None
    o = res.x.reshape(K, 2) * UNIT_M
    return o, q_rest + sur.energy(o)[0]


def solve_deployment(scn, dec: Decisions, eps2: float = 1e-4, *, max_iter: int = MAX_ITER,
                     radius: float = TRUST_RADIUS_M) -> DeployResult:
    """Successive convex approximation of the placement problem from ``dec.uav_pos``.

    A step is kept only if the true objective does not increase and every
    constraint still holds; otherwise the trust radius is halved.
    """
    report = cost.objective(scn, dec)
    model = build_model(scn, dec, report)
    o = np.array(dec.uav_pos, dtype=float)
    if model.m == 0 and model.relay.size == 0 and model.sat.size == 0:
        return DeployResult(o, "empty", 0)
    q = report.objective_q
    q_rest = q - model.true_energy(o)
    trace = [{"iteration": 0, "surrogate": q, "objective": q, "positions": o.tolist(), "radius": radius}]
    status = "iteration-limit"
    it = 0
    for it in range(1, max_iter + 1):
        o_new, q_hat = solve_subproblem(model, o, radius, q_rest)
        if o_new is None:
            status = "stalled"
            break
        try:
            q_new, ok = _true_q(scn, dec, o_new)
        except ValueError:  # coincident nodes
            q_new, ok = np.inf, False
        if not ok or q_new > q:
            radius *= 0.5
            trace.append({"iteration": it, "surrogate": q_hat, "objective": q, "positions": o.tolist(),
                          "radius": radius, "rejected": True})
            if radius < MIN_RADIUS_M:
                status = "converged"
                break
            continue
        rel = abs(q - q_hat) / max(abs(q), 1e-300)
        o = o_new
        q_rest = q_new - model.true_energy(o)
        q = q_new
        trace.append({"iteration": it, "surrogate": q_hat, "objective": q, "positions": o.tolist(), "radius": radius})
        if rel <= eps2:
            status = "converged"
            break
    return DeployResult(o, status, it, trace)


def delay_budget(scn, dec: Decisions):
    """Per-device leg delays (access, relay, satellite incl. propagation) at the current positions.

    Legs a device does not use are zero, as are all legs of devices that
    offload nothing.
    """
    lt = channel.links(scn, dec)
    rep = cost.objective(scn, dec, lt)
    K = scn.K
    kind = route_kind(dec.route, scn.cell, K)
    on = dec.beta > 0
    lam_access = np.where(on, rep.tx_delay, 0.0)
    lam_relay = np.where(on & (kind == RELAY), rep.leg_delay, 0.0)
    lam_sat = np.where(on & (kind == SATELLITE), rep.leg_delay, 0.0)
    return lam_access, lam_relay, lam_sat
