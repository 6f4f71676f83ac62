"""Uplink power control by the concave-convex procedure.

With bands fixed, each transmitting device must push its split through the
access link within what is left of its deadline once the remote legs are
paid. Written as a difference of convex functions,

    Rhat_j(P) = beta_j / (omega * budget_j) - log2(S_j(P))      (convex)
    U_j(P)    = -log2(I_j(P) + noise)                            (convex)
    Rhat_j(P) - U_j(P) <= 0,

where S_j is the total received power at the serving UAV and I_j the
interference. Each iteration replaces U_j by its tangent (a global
minorant, so the convexified constraint is a restriction) and the concave
transmit energy by its tangent (a global majorant), then solves the convex
subproblem exactly (see :func:`ccp_step`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import channel, cost, kernel
from .decisions import Decisions

LN2 = math.log(2.0)
MAX_ITER = 100


@dataclass
class PowerModel:
    """Active-set view of the power problem (devices that transmit bits)."""

    active: np.ndarray  # global device ids
    beta: np.ndarray
    g_own: np.ndarray  # gain toward own UAV
    G_int: np.ndarray  # (m, m) gain of interferer i toward j's UAV, 0 if no interference
    I0: np.ndarray  # interference from devices outside the active set
    noise: float
    bandwidth: float
    budget: np.ndarray  # seconds available for the uplink
    pmax: np.ndarray

    @property
    def m(self) -> int:
        return self.active.size

    def interference(self, P):
        return self.G_int @ P + self.I0

    def received(self, P):
        return self.g_own * P + self.interference(P) + self.noise

    def rates(self, P):
        return self.bandwidth * np.log2(1.0 + self.g_own * P / (self.interference(P) + self.noise))

    # DC pieces of the delay constraint
    def r_hat(self, P):
        S = self.received(P)
        val = self.beta / (self.bandwidth * self.budget) - np.log2(S)
        jac = -(self.G_int + np.diag(self.g_own)) / (LN2 * S)[:, None]
        return val, jac

    def u(self, P):
        D = self.interference(P) + self.noise
        return -np.log2(D), -self.G_int / (LN2 * D)[:, None]

    def delay_gap(self, P):
        """beta/R - budget per device (<= 0 means the true constraint holds)."""
        R = self.rates(P)
        with np.errstate(divide="ignore"):
            return np.where(R > 0, self.beta / np.where(R > 0, R, 1.0), np.inf) - self.budget

    def energy(self, P):
        """Total transmit energy and its gradient."""
        D = self.interference(P) + self.noise
        S = D + self.g_own * P
        L = np.log2(S) - np.log2(D)
        E = self.beta * P / (self.bandwidth * L)
        # dL/dP_i for every (j, i)
        dL = (self.G_int + np.diag(self.g_own)) / (LN2 * S)[:, None] - self.G_int / (LN2 * D)[:, None]
        coef = -self.beta * P / (self.bandwidth * L * L)
        grad = coef @ dL + self.beta / (self.bandwidth * L)
        return float(E.sum()), grad


def linearize_u(model: PowerModel, anchor):
    """Affine minorant of U at ``anchor`` as a callable (value, jacobian)."""
    u0, ju = model.u(anchor)

    def ubar(P):
        return u0 + ju @ (P - anchor), ju

    return ubar


def build_model(scn, dec: Decisions, lt=None, report=None, margin: float = cost.SOLVER_MARGIN) -> PowerModel:
    if lt is None:
        lt = channel.links(scn, dec)
    if report is None:
        report = cost.objective(scn, dec, lt)
    has = dec.band >= 0
    active = np.flatnonzero(has & (dec.beta > 0))
    idle = np.flatnonzero(has & (dec.beta <= 0) & (dec.power > 0))
    cell, band = scn.cell, dec.band
    G = lt.gain
    K = scn.K
    lit = scn.phys.literal_interference

    def interferes(i_idx, j_idx):
        same_band = band[i_idx][None, :] == band[j_idx][:, None]
        if lit:
            mask = same_band & (i_idx[None, :] != j_idx[:, None])
            return mask * (K - 1)
        return same_band & (cell[i_idx][None, :] != cell[j_idx][:, None])

    rx = cell[active]
    G_int = interferes(active, active) * G[active][:, rx].T
    I0 = (interferes(idle, active) * G[idle][:, rx].T) @ dec.power[idle] if idle.size else np.zeros(active.size)
    budget = scn.deadline[active] * (1.0 - margin) - report.comp_delay[active] - report.leg_delay[active]
    return PowerModel(
        active, dec.beta[active], G[active, rx], G_int, I0, scn.phys.noise_w, scn.phys.subband_hz, budget,
        scn.max_power[active],
    )


@dataclass
class PowerResult:
    power: np.ndarray  # full (J,) vector
    status: str  # converged / iteration-limit / infeasible / empty
    iterations: int
    trace: list = field(default_factory=list)
    binding: list = field(default_factory=list)  # devices whose deadline cannot be met

    @property
    def ok(self) -> bool:
        return self.status in ("converged", "iteration-limit", "empty")


def initial_power(model: PowerModel, start=None):
    """Strictly feasible starting powers, or (None, binding devices)."""
    if model.m == 0:
        return np.zeros(0), []
    cands = []
    if start is not None:
        cands.append(np.clip(start, 0.0, model.pmax))
    B_hyp = model.pmax  # scaled below
    t = 1.0 / 25.0
    while True:
        cands.append(np.minimum(B_hyp * t, model.pmax))
        if t >= 1.0:
            break
        t = min(1.0, 2.0 * t)
    for P in cands:
        if np.all(P > 0) and np.all(model.delay_gap(P) < -1e-12 * model.budget):
            return P, []
    P = model.pmax
    bad = np.flatnonzero(~(model.delay_gap(P) < 0))
    return None, [int(model.active[i]) for i in bad]


def solve_power(scn, dec: Decisions, eps1: float = 1e-4, lt=None, report=None, *, max_iter: int = MAX_ITER,
                hypothesis_idle: bool = True, margin: float = cost.SOLVER_MARGIN) -> PowerResult:
    """Minimise uplink transmit energy over the powers of transmitting devices.

    Devices that hold a band but send nothing keep the matching hypothesis
    ``P_max / B`` when ``hypothesis_idle`` (so a later split step still sees
    a usable rate); devices without a band get zero power. Deadlines are
    shrunk by ``margin`` (a fraction); if that leaves no feasible start, the
    true deadlines are used instead.
    """
    res = _solve_power(scn, dec, eps1, lt, report, max_iter, hypothesis_idle, margin)
    if res.status == "infeasible" and margin > 0:
        res = _solve_power(scn, dec, eps1, lt, report, max_iter, hypothesis_idle, 0.0)
    return res


def _solve_power(scn, dec, eps1, lt, report, max_iter, hypothesis_idle, margin):
    model = build_model(scn, dec, lt, report, margin)
    full = np.where(dec.band >= 0, dec.power, 0.0)
    if hypothesis_idle:
        idle = (dec.band >= 0) & (dec.beta <= 0)
        full = np.where(idle, scn.max_power / scn.B, full)
    if model.m == 0:
        return PowerResult(full, "empty", 0)
    if np.any(model.budget <= 0):
        bad = [int(j) for j in model.active[model.budget <= 0]]
        return PowerResult(full, "infeasible", 0, binding=bad)
    P, bad = initial_power(model, dec.power[model.active])
    if P is None:
        return PowerResult(full, "infeasible", 0, binding=bad)

    trace = []
    E_prev, _ = model.energy(P)
    trace.append({"iteration": 0, "surrogate": E_prev, "energy": E_prev, "max_gap": float(model.delay_gap(P).max())})
    status = "iteration-limit"
    it = 0
    for it in range(1, max_iter + 1):
        P_new, surrogate = ccp_step(model, P)
        if P_new is None:
            status = "converged"
            it -= 1
            break
        E_new, _ = model.energy(P_new)
        gap = model.delay_gap(P_new)
        if surrogate > E_prev or E_new > E_prev * (1 + 1e-12) or np.any(gap > 1e-8 * model.budget):
            status = "converged"  # no further certified descent
            it -= 1
            break
        trace.append({"iteration": it, "surrogate": surrogate, "energy": E_new, "max_gap": float(gap.max())})
        rel = abs(E_prev - E_new) / max(E_prev, 1e-300)
        P, E_prev = P_new, E_new
        if rel <= eps1:
            status = "converged"
            break
    full = full.copy()
    full[model.active] = P
    return PowerResult(full, status, it, trace)


def required_power(model: PowerModel, anchor):
    """Power that meets each deadline exactly at the anchor's interference."""
    gamma = np.exp2(model.beta / (model.bandwidth * model.budget)) - 1.0
    return gamma * (model.interference(anchor) + model.noise) / model.g_own


def ccp_step(model: PowerModel, anchor, method: str = "tight"):
    """Solve the convexified subproblem at ``anchor``; returns (P, surrogate value at P).

    The subproblem minimises a linear form with positive coefficients, and
    each convexified constraint only asks the device's own received power to
    exceed a level that grows with the other devices' powers. Its optimum
    is therefore the componentwise-smallest feasible point, where every
    constraint is tight; ``method="tight"`` finds it by Gauss-Seidel sweeps
    started at the (feasible) anchor. ``method="kernel"`` hands the same
    program to the generic barrier solver instead.
    """
    E0, gE = model.energy(anchor)
    if method == "kernel":
        P = _ccp_step_kernel(model, anchor, E0, gE)
    else:
        P = _ccp_step_tight(model, anchor)
    if P is None:
        return None, E0
    return P, float(E0 + gE @ (P - anchor))


def convexified_constraint(model: PowerModel, anchor):
    """``c(P) <= 0`` form of the convexified delay constraint: (values, jacobian)."""
    ubar = linearize_u(model, anchor)

    def c(P):
        r, jr = model.r_hat(P)
        u, ju = ubar(P)
        return r - u, jr - ju

    return c


def _ccp_step_tight(model: PowerModel, anchor, sweeps: int = 200, rtol: float = 1e-13):
    u0, ju = model.u(anchor)
    w = -ju  # >= 0, zero diagonal
    target0 = model.beta / (model.bandwidth * model.budget) - u0
    P = anchor.copy()
    order = np.argsort(model.active, kind="stable")
    for _ in range(sweeps):
        change = 0.0
        for j in order:
            need = target0[j] + w[j] @ (P - anchor)
            others = model.G_int[j] @ P + model.I0[j] + model.noise
            with np.errstate(over="ignore"):  # an unreachable target overflows to inf and clips to pmax
                pj = (np.exp2(need) - others) / model.g_own[j]
            pj = min(max(pj, 0.0), model.pmax[j])
            change = max(change, abs(pj - P[j]) / max(P[j], 1e-300))
            P[j] = pj
        if change <= rtol:
            break
    # Each device now sits on its own constraint up to rounding; nudge up to
    # the nearest representable point on the feasible side.
    c = convexified_constraint(model, anchor)
    for _ in range(60):
        val, _ = c(P)
        viol = val > 0
        if not viol.any():
            break
        P[viol] = np.minimum(np.nextafter(P[viol], np.inf) * (1 + 1e-15), model.pmax[viol])
    else:
        return None
    return P


def _ccp_step_kernel(model: PowerModel, anchor, E0, gE):
    unit = np.minimum(required_power(model, anchor), model.pmax)
    unit = np.where(unit > 0, unit, model.pmax)
    norm = max(E0, 1e-300)
    c = convexified_constraint(model, anchor)

    def obj(x):
        P = x * unit
        return float(E0 + gE @ (P - anchor)) / norm, gE * unit / norm

    def cons(x):
        val, jac = c(x * unit)
        return val, jac * unit[None, :]

    prog = kernel.ConvexProgram(model.m, obj, 0.0, model.pmax / unit, constraints=cons)
    res = kernel.solve(prog, anchor / unit, tol=1e-12, max_iter=5000, mu0=1e-3 / model.m)
    if res.status == kernel.INFEASIBLE_START:
        return None
    return np.minimum(res.x * unit, model.pmax)


def fixed_power(scn, dec: Decisions, fraction: float = 0.5) -> np.ndarray:
    """``fraction * P_max`` for every device holding a band."""
    return np.where(dec.band >= 0, fraction * scn.max_power, 0.0)
