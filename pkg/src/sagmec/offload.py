"""Routing of offloaded bits by block successive upper-bound minimisation.

Each offloading device spreads a unit of mass over the nodes that could run
its bits: its own UAV, another UAV (relay) or a satellite. Column ``n`` of
the mass matrix is node ``n`` in the route encoding, so a one-hot row is a
route. On the relaxed matrix the objective is convex: relay and satellite
energies are linear in the mass, and the compute energy of UAV ``n``,

    kappa_n F_n^2 * sum_j w_jn^3 / W_n^2,   w_jn = alpha_j beta_j x_jn,

is a sum of perspectives of ``t^3``. Blocks are updated in the order w, v, z;
a block moves mass between its own coordinates and the next block's
(w<->v, v<->z, z<->w) so each device's row keeps summing to one. Deadlines
enter as linear constraints with the other devices' loads frozen at the
anchor. The relaxed result is rounded by argmax and repaired greedily.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import channel, cost, kernel
from .decisions import Decisions

MU = 1.0
MAX_OUTER = 50
EXHAUSTIVE_MAX_ROUTES = 3**6
KERNEL_ITER = 60  # per barrier stage; rounding only needs the argmax


@dataclass(frozen=True)
class BsumConfig:
    mu: float = MU
    eps3: float = 1e-4
    max_outer: int = MAX_OUTER

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.eps3 > 0:
            raise ValueError("eps3 must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")


class GuardError(ValueError):
    """Instance too large for exhaustive routing."""


def one_hot(route, n_nodes: int) -> np.ndarray:
    x = np.zeros((len(route), n_nodes))
    x[np.arange(len(route)), route] = 1.0
    return x


@dataclass
class RoutingModel:
    """Relaxed objective of the routing problem (every other block fixed)."""

    scn: object
    dec: Decisions
    const: float  # local + uplink energy
    work: np.ndarray  # alpha * beta
    relay_cost: np.ndarray  # (J, N) J per unit mass on backhaul legs
    tx_delay: np.ndarray
    leg_delay_unit: np.ndarray  # (J, N) leg delay per bit on the node's link (0 for own UAV)
    prop: np.ndarray  # (J, N) propagation delay (satellite columns only)

    @property
    def N(self) -> int:
        return self.scn.K + self.scn.S

    def value(self, x) -> float:
        """Relaxed Q; equals :func:`cost.objective` at one-hot rows."""
        return float(self.const + self.compute_energy(x)[0] + np.sum(self.relay_cost * x))

    def gradient(self, x):
        return self.compute_energy(x)[1] + self.relay_cost

    def compute_energy(self, x):
        scn = self.scn
        K = scn.K
        w = self.work[:, None] * x[:, :K]
        W = w.sum(axis=0)
        c = scn.uav_chip * scn.uav_cpu**2
        grad = np.zeros_like(x)
        ok = W > 0
        if not ok.any():
            return 0.0, grad
        Wk = np.where(ok, W, 1.0)
        cube = (w**3).sum(axis=0)
        e = float(np.sum(np.where(ok, c * cube / Wk**2, 0.0)))
        dw = np.where(ok, c * (3.0 * w**2 / Wk**2 - 2.0 * cube / Wk**3), 0.0)
        grad[:, :K] = dw * self.work[:, None]
        return e, grad

    def frozen_delay(self, anchor):
        """Delay coefficient of each (device, node) with the others' loads at ``anchor``: (J, N)."""
        scn = self.scn
        K = scn.K
        beta = self.dec.beta
        load_w = self.work[:, None] * anchor[:, :K]
        W = load_w.sum(axis=0)
        comp = np.zeros((scn.J, self.N))
        comp[:, :K] = (W[None, :] - load_w + self.work[:, None]) / scn.uav_cpu[None, :]
        # bits already on each device's outgoing links, by destination node
        bits = self.link_bits(anchor)  # (K, N)
        own_bits = beta[:, None] * anchor
        leg = (bits[scn.cell] - own_bits + beta[:, None]) * self.leg_delay_unit + self.prop
        return comp + leg

    def link_bits(self, x):
        scn = self.scn
        out = np.zeros((scn.K, self.N))
        np.add.at(out, scn.cell, self.dec.beta[:, None] * x)
        out[np.arange(scn.K), np.arange(scn.K)] = 0.0
        return out


def build_model(scn, dec: Decisions, lt=None) -> RoutingModel:
    if lt is None:
        lt = channel.links(scn, dec)
    report = cost.objective(scn, dec, lt)
    K, S, J = scn.K, scn.S, scn.J
    N = K + S
    cell = scn.cell
    beta = dec.beta
    rate = np.zeros((J, N))
    R_uu = lt.backhaul_uav[cell]  # (J, K)
    rate[:, :K] = R_uu
    if S:
        rate[:, K:] = lt.backhaul_sat[cell]
    with np.errstate(divide="ignore"):
        per_bit = np.where(rate > 0, 1.0 / np.where(rate > 0, rate, 1.0), np.inf)
    per_bit[np.arange(J), cell] = 0.0
    relay_cost = np.where(beta[:, None] > 0, scn.uav_power[cell][:, None] * beta[:, None] * per_bit, 0.0)
    prop = np.zeros((J, N))
    if S:
        prop[:, K:] = cost.propagation_delay(lt.sat_distance, scn.phys.light_speed)[cell]
    const = float(report.local_energy.sum() + report.tx_energy.sum())
    return RoutingModel(scn, dec, const, scn.cycles_per_bit * beta, relay_cost, report.tx_delay, per_bit, prop)


def proximal_objective(model: RoutingModel, x, block_mask, anchor, mu: float) -> float:
    """Q with the block's coordinates taken from ``x`` and the rest from ``anchor``, plus (mu/2)||block - anchor||^2."""
    y = np.where(block_mask, x, anchor)
    d = (y - anchor)[block_mask]
    return model.value(y) + 0.5 * mu * float(d @ d)


def block_columns(scn, name: str):
    """(block, partner) column masks per device for block ``w``, ``v`` or ``z``."""
    K, S, J = scn.K, scn.S, scn.J
    N = K + S
    own = np.zeros((J, N), dtype=bool)
    own[np.arange(J), scn.cell] = True
    uav = np.zeros((J, N), dtype=bool)
    uav[:, :K] = True
    sets = {"w": own, "v": uav & ~own, "z": ~uav}
    nxt = {"w": "v", "v": "z", "z": "w"}
    return sets[name], sets[nxt[name]]


def block_update(model: RoutingModel, x, name: str, mu: float, movable=None, allowed=None):
    """Proximal update of block ``name`` together with its partner; returns the new matrix.

    Only rows in ``movable`` change, and only within ``allowed`` columns.
    Rows sitting on or past their deadline at the anchor stay put.
    """
    scn = model.scn
    blk, partner = block_columns(scn, name)
    free = blk | partner
    if allowed is not None:
        free &= allowed
    anchor = np.array(x, dtype=float)
    D = model.frozen_delay(anchor)
    phi_all = scn.deadline
    slack = model.tx_delay + np.sum(anchor * np.where(np.isfinite(D), D, 0.0), axis=1) - phi_all
    ok_row = (free.sum(axis=1) >= 2) & (slack < 0) & np.all(np.isfinite(D) | ~free, axis=1)
    if movable is not None:
        ok_row &= movable
    rows = np.flatnonzero(ok_row)
    if rows.size == 0:
        return anchor
    cols = [np.flatnonzero(free[r]) for r in rows]
    flat = np.concatenate([r * model.N + c for r, c in zip(rows, cols)])
    owner = np.concatenate([np.full(c.size, i) for i, c in enumerate(cols)])
    n = flat.size
    starts = np.cumsum([0] + [c.size for c in cols])
    groups = [(np.arange(starts[i], starts[i + 1]), float(anchor.ravel()[flat[starts[i]:starts[i + 1]]].sum()))
              for i in range(rows.size)]
    phi = phi_all[rows]
    fixed_part = np.where(free[rows], 0.0, anchor[rows] * np.where(np.isfinite(D[rows]), D[rows], 0.0))
    base = model.tx_delay[rows] + fixed_part.sum(axis=1)
    coef = D.ravel()[flat]
    x0 = anchor.ravel()[flat]
    jac = np.zeros((rows.size, n))
    jac[owner, np.arange(n)] = coef / phi[owner]

    def unpack(v):
        y = anchor.ravel().copy()
        y[flat] = v
        return y.reshape(anchor.shape)

    def obj(v):
        y = unpack(v)
        d = v - x0
        e, ge = model.compute_energy(y)
        g = (ge + model.relay_cost).ravel()[flat] + mu * d
        q = model.const + e + float(np.sum(model.relay_cost * y))
        return q + 0.5 * mu * float(d @ d), g

    def cons(v):
        vals = base + np.bincount(owner, weights=coef * v, minlength=rows.size) - phi
        return vals / phi, jac

    prog = kernel.ConvexProgram(n, obj, 0.0, 1.0, constraints=cons, simplex_groups=groups)
    res = kernel.solve(prog, x0, tol=1e-7, max_iter=KERNEL_ITER)
    if res.status == kernel.INFEASIBLE_START:
        return anchor
    y = unpack(res.x)
    if proximal_objective(model, y, free, anchor, mu) > model.value(anchor):
        return anchor
    return y


@dataclass
class OffloadResult:
    route: np.ndarray
    relaxed: np.ndarray
    status: str  # converged / iteration-limit / empty
    iterations: int
    infeasible: list = field(default_factory=list)
    trace: list = field(default_factory=list)


def allowed_nodes(scn, allow_relay: bool = True) -> np.ndarray:
    """(J, N) mask of destinations each device may use."""
    N = scn.K + scn.S
    mask = np.ones((scn.J, N), dtype=bool)
    if not allow_relay:
        mask[:, : scn.K] = False
        mask[np.arange(scn.J), scn.cell] = True
    return mask


def priority_order(scn, j: int, allow_relay: bool = True) -> np.ndarray:
    """Destination order used to break ties: own UAV, other UAVs by id, satellites by id."""
    K, S = scn.K, scn.S
    k = int(scn.cell[j])
    relays = [n for n in range(K) if n != k] if allow_relay else []
    return np.array([k] + relays + list(range(K, K + S)))


def round_routes(scn, relaxed, allow_relay: bool = True) -> np.ndarray:
    """Largest relaxed mass per device; ties follow :func:`priority_order`."""
    route = np.empty(scn.J, dtype=np.int64)
    for j in range(scn.J):
        order = priority_order(scn, j, allow_relay)
        route[j] = order[int(np.argmax(relaxed[j, order]))]
    return route


def _remote_excess(scn, dec):
    rep = cost.objective(scn, dec)
    phi = scn.deadline
    ex = (rep.remote_delay - phi) / phi
    return np.where(rep.remote_delay <= phi * (1 + cost.FEAS_RTOL), 0.0, ex), rep


def repair_routes(scn, dec: Decisions, route, allow_relay: bool = True):
    """Greedy feasibility repair; returns (route, devices still violating their deadline).

    The worst violator moves to its delay-minimal destination and is then
    left alone, so the loop runs at most once per device.
    """
    route = np.array(route, dtype=np.int64)
    settled = set()
    while True:
        ex, _ = _remote_excess(scn, dec.evolve(route=route))
        cand = [j for j in np.argsort(-ex, kind="stable") if ex[j] > 0 and j not in settled]
        if not cand:
            break
        j = int(cand[0])
        best, best_d = route[j], np.inf
        for n in priority_order(scn, j, allow_relay):
            trial = route.copy()
            trial[j] = n
            d = cost.objective(scn, dec.evolve(route=trial)).remote_delay[j]
            if d < best_d:
                best, best_d = n, d
        route[j] = best
        settled.add(j)
    ex, _ = _remote_excess(scn, dec.evolve(route=route))
    return route, [int(j) for j in np.flatnonzero(ex > 0)]


def round_and_repair(scn, dec: Decisions, relaxed, allow_relay: bool = True):
    return repair_routes(scn, dec, round_routes(scn, relaxed, allow_relay), allow_relay)


def solve_uav_offload(scn, dec: Decisions, config: BsumConfig | None = None, lt=None, *,
                      allow_relay: bool = True) -> OffloadResult:
    """Relaxed BSUM from the current routes, then rounding and repair."""
    config = config or BsumConfig()
    allowed = allowed_nodes(scn, allow_relay)
    N = scn.K + scn.S
    x = one_hot(dec.route, N)
    model = build_model(scn, dec, lt)
    active = dec.beta > 0
    q = model.value(x)
    trace = [{"iteration": 0, "q": q}]
    if not active.any() or N < 2:
        route, bad = repair_routes(scn, dec, dec.route, allow_relay)
        return OffloadResult(route, x, "empty", 1, bad, trace)
    status = "iteration-limit"
    it = 0
    for it in range(1, config.max_outer + 1):
        q_start = q
        steps = []
        for name in ("w", "v", "z"):
            x_new = block_update(model, x, name, config.mu, active, allowed)
            q_new = model.value(x_new)
            steps.append({"block": name, "q": q_new, "moved": float(np.abs(x_new - x).sum())})
            x, q = x_new, q_new
        trace.append({"iteration": it, "q": q, "blocks": steps})
        if abs(q_start - q) <= config.eps3 * max(abs(q_start), 1e-300):
            status = "converged"
            break
    route, bad = round_and_repair(scn, dec, x, allow_relay)
    return OffloadResult(route, x, status, it, bad, trace)


def exhaustive_routes(scn, dec: Decisions, devices=None, *, allow_relay: bool = True):
    """Best feasible routing by enumeration over ``devices`` (default: offloading ones); (route, Q).

    Returns the incoming routes and ``inf`` when no routing is feasible.
    """
    devices = np.flatnonzero(dec.beta > 0) if devices is None else np.asarray(devices)
    choices = [priority_order(scn, int(j), allow_relay) for j in devices]
    if int(np.prod([c.size for c in choices])) > EXHAUSTIVE_MAX_ROUTES:
        raise GuardError(f"exhaustive routing limited to {EXHAUSTIVE_MAX_ROUTES} cases")
    best, best_q = np.array(dec.route), np.inf
    for combo in itertools.product(*choices):
        route = np.array(dec.route)
        route[devices] = combo
        rep = cost.objective(scn, dec.evolve(route=route))
        if rep.feasible and rep.objective_q < best_q:
            best, best_q = route, rep.objective_q
    return best, best_q
