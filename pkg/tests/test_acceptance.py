"""End-to-end acceptance suite.

Each test checks one criterion at its stated tolerance and prints a single
``CRITERION n: PASS|FAIL`` line; the lines are repeated in the terminal
summary. Run on its own with ``pytest tests/test_acceptance.py -s``.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

from conftest import make_decisions, make_scenario
from sagmec import bcd, channel, cost, deploy, harness, kernel, matching, offload, power
from sagmec.constants import get_preset
from sagmec.scenario import SimConfig, generate_scenario

RESULTS: dict[int, tuple[bool, str]] = {}
TREND_SEEDS = range(20)


def report(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (bool(ok), detail)
    print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def mean_q(values):
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# 1, 2: matching


def test_criterion_01_matching_stability():
    gen = np.random.default_rng(1)
    t0 = time.perf_counter()
    blocking = 0
    for _ in range(1000):
        n, B = gen.integers(1, 11, size=2)
        dev = gen.uniform(-0.2, 1, (n, B))
        band = gen.uniform(-0.2, 1, (B, n))
        res = matching.deferred_acceptance(dev, band)
        blocking += len(matching.blocking_pairs(res.match, dev, band))
    dt = time.perf_counter() - t0
    report(1, blocking == 0 and dt < 5.0, f"{blocking} blocking pairs over 1000 instances in {dt:.2f} s")


def test_criterion_02_device_optimality():
    gen = np.random.default_rng(2)
    worse = 0
    checked = 0
    for _ in range(200):
        n, B = gen.integers(1, 6, size=2)
        dev = gen.uniform(-0.2, 1, (n, B))
        band = gen.uniform(-0.2, 1, (B, n))
        da = matching.deferred_acceptance(dev, band).match
        u = [dev[j, b] if b >= 0 else 0.0 for j, b in enumerate(da)]
        for a in matching.injective_assignments(n, B):
            if matching.is_stable(a, dev, band)[0]:
                checked += 1
                v = [dev[j, b] if b >= 0 else 0.0 for j, b in enumerate(a)]
                worse += any(x < y for x, y in zip(u, v))
    report(2, worse == 0, f"{worse} stable matchings preferred by some device ({checked} stable matchings checked)")


# ---------------------------------------------------------------------------
# 3: power control


def _power_instance(seed):
    scn = generate_scenario(SimConfig(num_devices=10, num_uavs=2, subbands=4), seed)
    dec = bcd.initialise(scn, bcd.PLANS["ato"], seed)
    dec = dec.evolve(beta=np.where(dec.band >= 0, dec.beta, 0.0),
                     power=np.where(dec.band >= 0, scn.max_power, 0.0))
    return scn, dec


def _fd_rel_err(fun, P):
    val, jac = fun(P)
    jac = np.atleast_2d(jac)
    fd = np.zeros_like(jac)
    for i in range(P.size):
        h = 1e-6 * max(P[i], 1e-3)
        e = np.zeros_like(P)
        e[i] = h
        fd[:, i] = (np.atleast_1d(fun(P + e)[0]) - np.atleast_1d(fun(P - e)[0])) / (2 * h)
    return float(np.linalg.norm(jac - fd) / max(np.linalg.norm(fd), 1e-300))


def test_criterion_03_ccp_descent():
    runs = descent_fail = by_eps = 0
    worst_fd = 0.0
    for seed in range(100):
        scn, dec = _power_instance(seed)
        model = power.build_model(scn, dec)
        if model.m == 0:
            continue
        P = np.random.default_rng(seed).uniform(0.2, 1.0, model.m) * model.pmax
        anchor = np.random.default_rng(seed + 1).uniform(0.2, 1.0, model.m) * model.pmax
        c = power.convexified_constraint(model, anchor)
        for fn in (model.u, model.r_hat, model.energy, c):
            worst_fd = max(worst_fd, _fd_rel_err(fn, P))
        res = power.solve_power(scn, dec)
        if not res.ok:
            continue
        runs += 1
        en = [t["energy"] for t in res.trace]
        sur = [t["surrogate"] for t in res.trace]
        # every convexified optimum is no worse than its anchor, and the true energy never rises
        if any(s > e * (1 + 1e-12) for s, e in zip(sur[1:], en)) or any(b > a * (1 + 1e-12) for a, b in zip(en, en[1:])):
            descent_fail += 1
        by_eps += res.status == "converged" and res.iterations <= power.MAX_ITER
    share = by_eps / max(runs, 1)
    ok = runs > 0 and descent_fail == 0 and worst_fd <= 1e-4 and share >= 0.95
    report(3, ok, f"{runs} solved seeds, {descent_fail} descent violations, worst FD rel err {worst_fd:.2e}, "
                  f"{share:.0%} stopped by eps1")


# ---------------------------------------------------------------------------
# 4: placement


def test_criterion_04_sca():
    worst_tan = 0.0
    rises = runs = 0
    for seed in range(100):
        scn = generate_scenario(SimConfig(num_devices=10, num_uavs=3), seed)
        gen = np.random.default_rng(seed)
        route = np.array(scn.cell)
        pick = gen.random(scn.J)
        route[pick < 0.3] = (scn.cell[pick < 0.3] + 1) % scn.K
        route[pick > 0.8] = scn.K
        dec = bcd.initialise(scn).evolve(beta=0.3 * scn.data_bits, route=route)
        model = deploy.build_model(scn, dec)
        # tangency at every accepted anchor of the run
        res = deploy.solve_deployment(scn, dec)
        anchors = [np.array(t["positions"]) for t in res.trace if not t.get("rejected")]
        for a in anchors:
            sur = deploy.Surrogate(model, a)
            pairs = [(sur.energy(a)[0], model.true_energy(a)), (sur.access(a)[0], model.access_rate(a))]
            if model.relay.size:
                pairs.append((sur.relay(a)[0], model.relay_rate(a)))
            if model.sat.size:
                pairs += [(sur.sat(a)[0], model.sat_rate(a)), (sur.sat_distance(a)[0], model.sat_distance(a))]
            for s, t in pairs:
                worst_tan = max(worst_tan, float(np.max(np.abs(np.asarray(s) - t) / np.abs(t))))
        q = [t["objective"] for t in res.trace]
        runs += 1
        rises += any(b > a * (1 + 1e-6) for a, b in zip(q, q[1:]))
    # single device against a 1 m grid
    dev = np.array([260.0, 310.0])
    scn = make_scenario([dev], [dev + [60.0, 40.0]])
    dec = make_decisions(scn, 0.5)
    got = deploy.solve_deployment(scn, dec).uav_pos[0]
    best, arg = np.inf, None
    for dx in range(-80, 81):
        for dy in range(-80, 81):
            o = (dev + [dx, dy])[None, :]
            qv = cost.objective(scn, dec.evolve(uav_pos=o)).objective_q
            if qv < best:
                best, arg = qv, o[0]
    miss = float(np.linalg.norm(got - arg))
    ok = worst_tan <= 1e-9 and rises == 0 and miss <= 2.0
    report(4, ok, f"worst tangency rel err {worst_tan:.1e}, {rises}/{runs} runs with a rise, grid miss {miss:.2f} m")


# ---------------------------------------------------------------------------
# 5: routing


def test_criterion_05_bsum():
    # proximal identity and per-block monotonicity on a mid-size instance
    scn = generate_scenario(SimConfig(num_devices=10, num_uavs=3), 5)
    dec = make_decisions(scn, 0.4)
    model = offload.build_model(scn, dec)
    anchor = offload.one_hot(dec.route, model.N)
    ident = all(offload.proximal_objective(model, anchor, offload.block_columns(scn, b)[0], anchor, 1.0)
                == model.value(anchor) for b in "wvz")
    res = offload.solve_uav_offload(scn, dec)
    qs = [res.trace[0]["q"]] + [b["q"] for t in res.trace[1:] for b in t["blocks"]]
    mono = all(b <= a * (1 + 1e-12) for a, b in zip(qs, qs[1:]))
    # desk-scale instances against exhaustive routing
    within = counted = 0
    n = 100
    for i in range(n):
        cfg = dataclasses.replace(harness.oracle_instance(0, i), num_uavs=2)
        cfg = dataclasses.replace(cfg, num_devices=max(cfg.num_devices, 2))
        s = generate_scenario(cfg, 100003 + i)
        out = bcd.run_baseline(s, "proposed", seed=s.seed)
        _, q_best = offload.exhaustive_routes(s, out.decisions)
        if not np.isfinite(q_best):
            continue
        counted += 1
        q = out.report.objective_q if out.report.feasible else np.inf
        within += q <= q_best * 1.05
    share = within / max(counted, 1)
    report(5, ident and mono and share >= 0.9,
           f"identity {ident}, monotone {mono}, {within}/{counted} instances within 5% of exhaustive routing "
           f"({share:.0%}); {n - counted} skipped with no feasible routing at the final decisions")


# ---------------------------------------------------------------------------
# 6: outer loop


def test_criterion_06_bcd():
    rises = fast = 0
    slowest = 0.0
    for seed in range(100):
        scn = generate_scenario(SimConfig(num_devices=10, num_uavs=2), seed)
        out = bcd.run_baseline(scn, "proposed", seed=seed, eps4=1e-4)
        q = [out.trace.q0] + out.trace.q
        rises += any(b > a * (1 + 1e-6) for a, b in zip(q, q[1:]) if np.isfinite(a))
        fast += out.trace.converged and len(out.trace) <= 20
        slowest = max(slowest, out.runtime_s)
    ok = rises == 0 and fast >= 95 and slowest <= 60.0
    report(6, ok, f"{rises} seeds with a rise, {fast}/100 converged within 20 iterations, slowest {slowest:.1f} s")


# ---------------------------------------------------------------------------
# 7-10: trends


def _q(cfg, seed, variant):
    _, out, rec = harness.execute(cfg, seed, variant)
    return rec


def test_criterion_07_ordering():
    lines, ok = [], True
    for J in (10, 20, 30, 40):
        cfg = SimConfig(num_devices=J)
        qs = {v: mean_q([_q(cfg, s, v).total_energy_j for s in TREND_SEEDS]) for v in ("proposed", "no-collab", "all-local")}
        good = qs["proposed"] <= 1.01 * qs["no-collab"] and qs["no-collab"] <= qs["all-local"]
        ok &= good
        lines.append(f"J={J}: {qs['proposed']:.4g} / {qs['no-collab']:.4g} / {qs['all-local']:.4g}")
    report(7, ok, "mean Q proposed / no-collab / all-local: " + "; ".join(lines))


def test_criterion_08_data_size():
    sizes = np.array([0.1e6, 0.2e6, 0.3e6, 0.4e6, 0.5e6])
    base = SimConfig()
    means = np.array([mean_q([_q(harness.with_param(base, "data_size", a), s, "proposed").total_energy_j
                              for s in TREND_SEEDS]) for a in sizes])
    mono = bool(np.all(np.diff(means) > 0))
    slope, icpt = np.polyfit(sizes, means, 1)
    r2 = 1.0 - np.sum((means - (slope * sizes + icpt)) ** 2) / np.sum((means - means.mean()) ** 2)
    report(8, mono and r2 >= 0.9, f"means {np.array2string(means, precision=4)} J, increasing {mono}, R^2 {r2:.4f}")


def test_criterion_09_deadline():
    deadlines = [0.2, 0.3, 0.4, 0.5, 0.7, 1.0]
    base = SimConfig()
    frac = [float(np.mean([_q(harness.with_param(base, "deadline", d), s, "proposed").offload_fraction
                           for s in TREND_SEEDS])) for d in deadlines]
    mono = all(b <= a for a, b in zip(frac, frac[1:]))
    report(9, mono, "mean offload fraction " + ", ".join(f"{d * 1e3:.0f} ms: {f:.4f}" for d, f in zip(deadlines, frac)))


def test_criterion_10_rates():
    cfg = SimConfig(num_devices=20)
    r = {v: mean_q([_q(cfg, s, v).sum_rate_bps for s in TREND_SEEDS]) for v in ("proposed", "fpa", "rsa")}
    ok = r["proposed"] >= r["fpa"] >= r["rsa"]
    report(10, ok, f"mean sum access rate proposed {r['proposed']:.4g}, fpa {r['fpa']:.4g}, rsa {r['rsa']:.4g} bit/s")


# ---------------------------------------------------------------------------
# 11: formulas


def test_criterion_11_formulas():
    phys = get_preset("paper-table").phys
    errs = {}
    d = 137.5
    expect = phys.ref_gain / d**2 * math.exp(-phys.absorption * d)
    errs["thz gain"] = abs(channel.thz_gain(d, phys) - expect) / expect
    S, I, N = 3e-9, 4e-10, 1e-13
    errs["sinr"] = abs(channel.sinr_value(S, I, N) - S / (I + N)) / (S / (I + N))
    B, P, dd = phys.mm_bandwidth_uav_hz, 1.0, 200.0
    snr = P * phys.antenna_gain_tx * phys.antenna_gain_rx * phys.amp_factor * (
        phys.light_speed / (4 * math.pi * dd * phys.mm_carrier_hz)) ** 2 / (phys.noise_temp_k * phys.boltzmann * B)
    R = B * math.log2(1 + snr)
    errs["backhaul rate"] = abs(channel.backhaul_rate(dd, P, B, phys) - R) / R
    scn = make_scenario([[300, 300]], [[300, 300]], sat_alts=(780e3,))
    lt = channel.links(scn, make_decisions(scn, 0.5))
    t = float(cost.propagation_delay(lt.sat_distance, scn.phys.light_speed)[0, 0])
    t_ref = 2 * (780e3 - 50.0) / scn.phys.light_speed
    errs["propagation"] = abs(t - t_ref) / t_ref
    ok = all(e <= 1e-12 for e in errs.values()) and abs(t - 5.1997e-3) <= 5e-8
    report(11, ok, ", ".join(f"{k} {v:.1e}" for k, v in errs.items()) + f"; round trip {t * 1e3:.4f} ms")


# ---------------------------------------------------------------------------
# 12: determinism


def test_criterion_12_determinism(tmp_path):
    cfg = harness.RunConfig(scenario=SimConfig(num_devices=8), variants=("proposed", "rsa", "fpa"), seeds=(0, 1))
    names = ["sweep_deadline.csv", "sweep_deadline_summary.csv"]
    for d in ("a", "b"):
        harness.sweep(cfg, "deadline", [0.3, 0.5], tmp_path / d)
        harness.run(cfg, 4, tmp_path / d)
    names.append("proposed_seed4.csv")
    same = {n: (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names}
    report(12, all(same.values()), ", ".join(f"{n} {'identical' if s else 'DIFFERS'}" for n, s in same.items()))
