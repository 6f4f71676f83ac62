"""Outer block coordinate descent and the comparison schemes.

Each outer iteration runs, in order: the offload split, sub-band matching
followed by power control, UAV placement, and routing. A block's result is
kept only if it does not make the decisions worse (feasibility first, then
Q), so the recorded objective never increases.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import cost, deploy, matching, offload, power, rng, split
from .decisions import Decisions, initial_decisions

MAX_OUTER = 50

VARIANTS = ("proposed", "all-local", "no-collab", "c-uavs", "ato", "fto", "rsa", "fpa", "optimal")


class VariantError(ValueError):
    pass


@dataclass(frozen=True)
class Plan:
    """Which blocks a scheme optimises and how the fixed ones are set."""

    split: str = "optimise"  # optimise / none / all / half
    bands: str = "matching"  # matching / random / exhaustive
    power: str = "ccp"  # ccp / fixed
    placement: bool = True
    routing: str = "bsum"  # bsum / local / exhaustive
    allow_relay: bool = True


PLANS = {
    "proposed": Plan(),
    "all-local": Plan(split="none"),
    "no-collab": Plan(allow_relay=False),
    "c-uavs": Plan(placement=False),
    "ato": Plan(split="all"),
    "fto": Plan(split="half"),
    "rsa": Plan(bands="random"),
    "fpa": Plan(power="fixed"),
    "optimal": Plan(bands="exhaustive", routing="exhaustive"),
}


@dataclass
class OuterRecord:
    iteration: int
    q: float
    violation: float
    feasible: bool
    runtimes: dict
    sub_iterations: dict
    accepted: dict


@dataclass
class BcdTrace:
    records: list = field(default_factory=list)
    q0: float = float("nan")
    converged: bool = False
    diagnostics: list = field(default_factory=list)

    @property
    def q(self) -> list:
        return [r.q for r in self.records]

    def __len__(self) -> int:
        return len(self.records)


def _key(rep: cost.CostReport):
    return (0.0, rep.objective_q) if rep.feasible else (1.0, rep.violation)


def _no_worse(new: cost.CostReport, old: cost.CostReport) -> bool:
    return _key(new) <= _key(old)


def fixed_split(scn, how: str) -> np.ndarray:
    A = np.array(scn.data_bits)
    if how == "none":
        return np.zeros(scn.J)
    if how == "all":
        return A
    if how == "half":
        return 0.5 * A
    raise VariantError(f"unknown split rule {how!r}")


def initialise(scn, plan: Plan = Plan(), seed: int = 0) -> Decisions:
    """Starting point: nothing offloaded (or the scheme's fixed split), local routes,
    UAVs at the cluster centroids and a first band assignment at hypothesis powers."""
    dec = initial_decisions(scn)
    if plan.split != "optimise":
        dec = dec.evolve(beta=fixed_split(scn, plan.split))
    band = _bands(scn, dec, plan, seed)
    return dec.evolve(band=band, power=_start_power(scn, band, plan))


def _start_power(scn, band, plan: Plan):
    if plan.power == "fixed":
        return np.where(band >= 0, 0.5 * scn.max_power, 0.0)
    return np.where(band >= 0, matching.hypothesis_power(scn), 0.0)


def _bands(scn, dec, plan: Plan, seed: int):
    if plan.bands == "random":
        return matching.random_assignment(scn, rng.stream(seed, "rsa"))
    band, _ = matching.assign_subbands(scn, dec, exhaustive=plan.bands == "exhaustive")
    return band


def run_bcd(scn, init: Decisions | None = None, eps4: float = 1e-4, *, max_outer: int = MAX_OUTER,
            plan: Plan = Plan(), seed: int = 0, eps=1e-4, bsum: offload.BsumConfig | None = None):
    """Alternate over the blocks until the relative change of Q is at most ``eps4``.

    ``eps`` is the tolerance handed to the inner solvers. Returns the best
    decisions seen and the trace.
    """
    if not eps4 > 0:
        raise ValueError("eps4 must be positive")
    dec = init if init is not None else initialise(scn, plan, seed)
    rep = cost.objective(scn, dec)
    trace = BcdTrace(q0=rep.objective_q)

    def attempt(name, make):
        nonlocal dec, rep
        t0 = time.perf_counter()
        try:
            cand, iters = make(dec)
        except (ValueError, FloatingPointError) as exc:  # a block that cannot run keeps the old values
            trace.diagnostics.append(f"{name}: {exc}")
            cand, iters = None, 0
        ok = False
        if cand is not None:
            new_rep = cost.objective(scn, cand)
            if _no_worse(new_rep, rep):
                dec, rep, ok = cand, new_rep, True
        return time.perf_counter() - t0, iters, ok

    blocks = []
    if plan.split == "optimise":
        def split_block(d):
            # endpoint model first (it can switch devices on), then the exact program from there
            d = d.evolve(beta=split.solve_split_refined(scn, d).beta)
            beta = split.solve_split_joint(scn, d)
            if beta is None:
                return d, 1
            cand = d.evolve(beta=beta)
            return (cand if _no_worse(cost.objective(scn, cand), cost.objective(scn, d)) else d), 2
        blocks.append(("split", split_block))

    def bands_and_power(d):
        if plan.bands == "random":
            band = d.band
        else:
            band = _bands(scn, d, plan, seed)
        start = _start_power(scn, band, plan)
        if plan.power == "fixed":
            return d.evolve(band=band, power=start), 0
        keep = (band == d.band) & (band >= 0) & (d.power > 0)
        d = d.evolve(band=band, power=np.where(keep, d.power, start))
        res = power.solve_power(scn, d, eps)
        if not res.ok:
            trace.diagnostics.append(f"power: {res.status} {res.binding}")
        return d.evolve(power=res.power), res.iterations

    blocks.append(("bands_power", bands_and_power))
    if plan.placement:
        def place(d):
            res = deploy.solve_deployment(scn, d, eps)
            return d.evolve(uav_pos=res.uav_pos), res.iterations
        blocks.append(("placement", place))
    if plan.routing == "bsum":
        def route(d):
            res = offload.solve_uav_offload(scn, d, bsum or offload.BsumConfig(eps3=eps), allow_relay=plan.allow_relay)
            return d.evolve(route=res.route), res.iterations
        blocks.append(("routing", route))
    elif plan.routing == "exhaustive":
        def route(d):
            r, q = offload.exhaustive_routes(scn, d, allow_relay=plan.allow_relay)
            return (d.evolve(route=r) if np.isfinite(q) else None), 1
        blocks.append(("routing", route))

    q_prev = rep.objective_q
    for it in range(1, max_outer + 1):
        runtimes, iters, accepted = {}, {}, {}
        for name, make in blocks:
            runtimes[name], iters[name], accepted[name] = attempt(name, make)
        trace.records.append(OuterRecord(it, rep.objective_q, rep.violation, rep.feasible, runtimes, iters, accepted))
        q = rep.objective_q
        if abs(q_prev - q) <= eps4 * max(abs(q_prev), 1e-300):
            trace.converged = True
            break
        q_prev = q
    return dec, trace


@dataclass
class RunOutcome:
    variant: str
    decisions: Decisions
    report: cost.CostReport
    trace: BcdTrace
    runtime_s: float


def run_baseline(scn, variant: str, *, seed: int = 0, eps4: float = 1e-4, max_outer: int = MAX_OUTER,
                 bsum: offload.BsumConfig | None = None) -> RunOutcome:
    """Run one scheme end to end."""
    if variant not in PLANS:
        raise VariantError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")
    plan = PLANS[variant]
    t0 = time.perf_counter()
    if variant == "all-local":
        dec = initial_decisions(scn)
        rep = cost.objective(scn, dec)
        trace = BcdTrace(q0=rep.objective_q, converged=True)
        trace.records.append(OuterRecord(1, rep.objective_q, rep.violation, rep.feasible, {}, {}, {}))
        return RunOutcome(variant, dec, rep, trace, time.perf_counter() - t0)
    if variant == "optimal":
        _guard_optimal(scn)
    dec, trace = run_bcd(scn, eps4=eps4, max_outer=max_outer, plan=plan, seed=seed, bsum=bsum)
    return RunOutcome(variant, dec, cost.objective(scn, dec), trace, time.perf_counter() - t0)


def _guard_optimal(scn):
    if scn.B > matching.EXHAUSTIVE_MAX_BANDS:
        raise matching.GuardError(f"optimal scheme needs at most {matching.EXHAUSTIVE_MAX_BANDS} bands")
    for k in range(scn.K):
        if scn.cell_members(k).size > matching.EXHAUSTIVE_MAX_DEVICES:
            raise matching.GuardError(f"optimal scheme needs at most {matching.EXHAUSTIVE_MAX_DEVICES} devices per cell")
    if (scn.K + scn.S) ** scn.J > offload.EXHAUSTIVE_MAX_ROUTES:
        raise offload.GuardError("optimal scheme: too many routing combinations")


__all__ = ["VARIANTS", "PLANS", "Plan", "BcdTrace", "OuterRecord", "RunOutcome", "run_bcd", "run_baseline",
           "initialise", "fixed_split", "VariantError"]
