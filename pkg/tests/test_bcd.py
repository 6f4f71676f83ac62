import numpy as np
import pytest

from conftest import make_scenario
from sagmec import bcd, cost, matching, offload
from sagmec.decisions import RELAY, route_kind
from sagmec.scenario import SimConfig, generate_scenario


def scenario(seed, J=8, K=2, **kw):
    return generate_scenario(SimConfig(num_devices=J, num_uavs=K, **kw), seed)


@pytest.mark.parametrize("seed", range(4))
def test_outer_objective_non_increasing(seed):
    scn = scenario(seed)
    out = bcd.run_baseline(scn, "proposed", seed=seed)
    q = [out.trace.q0] + out.trace.q
    assert all(b <= a * (1 + 1e-6) for a, b in zip(q, q[1:]) if np.isfinite(a))
    assert out.report.objective_q == pytest.approx(q[-1], rel=1e-12)
    assert out.report.objective_q <= cost.objective(scn, bcd.initialise(scn)).objective_q * (1 + 1e-12)


def test_infinite_tolerance_stops_after_one_pass():
    scn = scenario(0)
    _, trace = bcd.run_bcd(scn, eps4=np.inf)
    assert len(trace) == 1


def test_tolerance_must_be_positive():
    with pytest.raises(ValueError):
        bcd.run_bcd(scenario(0), eps4=0.0)


def test_all_local_closed_form():
    scn = scenario(1)
    out = bcd.run_baseline(scn, "all-local")
    expect = np.sum(scn.chip_coeff * scn.cpu_hz**2 * scn.cycles_per_bit * scn.data_bits)
    assert out.report.objective_q == pytest.approx(expect, rel=1e-12)
    assert np.all(out.decisions.beta == 0)


def test_all_local_flags_infeasible_deadlines():
    scn = make_scenario([[100, 100]], [[100, 100]], cpu=1e8, deadline=0.01)
    out = bcd.run_baseline(scn, "all-local")
    assert not out.report.feasible


def test_no_collab_never_relays():
    for seed in range(3):
        scn = scenario(seed, K=3)
        out = bcd.run_baseline(scn, "no-collab", seed=seed)
        kind = route_kind(out.decisions.route, scn.cell, scn.K)
        assert not np.any((kind == RELAY) & (out.decisions.beta > 0))


def test_no_collab_equals_proposed_with_one_uav():
    scn = scenario(2, K=1)
    a = bcd.run_baseline(scn, "proposed", seed=2)
    b = bcd.run_baseline(scn, "no-collab", seed=2)
    assert a.report.objective_q == b.report.objective_q


def test_fixed_split_variants():
    scn = scenario(3)
    assert np.array_equal(bcd.run_baseline(scn, "ato").decisions.beta, scn.data_bits)
    np.testing.assert_array_equal(bcd.run_baseline(scn, "fto").decisions.beta, 0.5 * scn.data_bits)


def test_c_uavs_keep_positions():
    scn = scenario(4)
    out = bcd.run_baseline(scn, "c-uavs")
    np.testing.assert_array_equal(out.decisions.uav_pos, bcd.initialise(scn).uav_pos)


def test_fpa_powers_are_half_pmax():
    scn = scenario(5)
    d = bcd.run_baseline(scn, "fpa").decisions
    np.testing.assert_allclose(d.power, np.where(d.band >= 0, 0.5 * scn.max_power, 0.0))


def test_unknown_variant():
    with pytest.raises(bcd.VariantError):
        bcd.run_baseline(scenario(0), "greedy")
    with pytest.raises(bcd.VariantError):
        bcd.fixed_split(scenario(0), "quarter")


def test_optimal_guard():
    with pytest.raises(matching.GuardError):
        bcd.run_baseline(scenario(0, subbands=25), "optimal")
    with pytest.raises(offload.GuardError):
        bcd.run_baseline(scenario(0, J=9, subbands=4), "optimal")


def test_rsa_reproducible_per_seed():
    scn = scenario(6)
    a = bcd.run_baseline(scn, "rsa", seed=11)
    b = bcd.run_baseline(scn, "rsa", seed=11)
    assert np.array_equal(a.decisions.band, b.decisions.band)
    assert a.report.objective_q == b.report.objective_q


def test_runs_are_deterministic():
    scn = scenario(7)
    a = bcd.run_baseline(scn, "proposed", seed=7)
    b = bcd.run_baseline(scn, "proposed", seed=7)
    assert a.trace.q == b.trace.q
    for f in ("beta", "band", "power", "uav_pos", "route"):
        assert np.array_equal(getattr(a.decisions, f), getattr(b.decisions, f))
