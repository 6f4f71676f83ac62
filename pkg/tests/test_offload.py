import numpy as np
import pytest

from conftest import make_decisions, make_scenario
from sagmec import cost, offload
from sagmec.scenario import SimConfig, generate_scenario


def random_case(seed, J=8, K=3):
    scn = generate_scenario(SimConfig(num_devices=J, num_uavs=K), seed)
    return scn, make_decisions(scn, 0.4)


@pytest.mark.parametrize("seed", range(3))
def test_relaxed_value_matches_cost_at_integer_routes(seed):
    scn, dec = random_case(seed)
    gen = np.random.default_rng(seed)
    model = offload.build_model(scn, dec)
    for _ in range(5):
        route = gen.integers(0, scn.K + scn.S, scn.J)
        rep = cost.objective(scn, dec.evolve(route=route))
        assert model.value(offload.one_hot(route, model.N)) == pytest.approx(rep.objective_q, rel=1e-9)


def test_proximal_identity():
    scn, dec = random_case(0)
    model = offload.build_model(scn, dec)
    anchor = offload.one_hot(dec.route, model.N)
    mask, _ = offload.block_columns(scn, "v")
    assert offload.proximal_objective(model, anchor, mask, anchor, 1.0) == model.value(anchor)
    y = anchor.copy()
    y[mask] = 0.1
    moved = np.where(mask, y, anchor)
    d2 = float(np.sum((moved - anchor) ** 2))
    assert offload.proximal_objective(model, y, mask, anchor, 0.0) == pytest.approx(model.value(moved))
    assert offload.proximal_objective(model, y, mask, anchor, 2.0) == pytest.approx(model.value(moved) + d2)


def test_block_columns_partition():
    scn, _ = random_case(0)
    blocks = [offload.block_columns(scn, n)[0] for n in "wvz"]
    total = sum(b.astype(int) for b in blocks)
    assert np.all(total == 1)
    assert np.all(blocks[0].sum(axis=1) == 1)


@pytest.mark.parametrize("seed", range(4))
def test_block_updates_monotone(seed):
    scn, dec = random_case(seed)
    res = offload.solve_uav_offload(scn, dec)
    qs = [res.trace[0]["q"]]
    for t in res.trace[1:]:
        qs.extend(b["q"] for b in t["blocks"])
    assert all(b <= a * (1 + 1e-12) for a, b in zip(qs, qs[1:]))
    # relaxed rows stay on the simplex
    np.testing.assert_allclose(res.relaxed.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(res.relaxed >= -1e-12)


def test_rounding_priority_and_ties():
    scn = make_scenario([[100, 100], [400, 400]], [[100, 100], [400, 400]])
    relaxed = np.array([[0.2, 0.4, 0.4],   # relay ties the satellite: relay wins
                        [0.5, 0.5, 0.0]])  # tie with own UAV (node 1): own wins
    assert offload.round_routes(scn, relaxed).tolist() == [1, 1]
    assert offload.priority_order(scn, 1).tolist() == [1, 0, 2]
    assert offload.priority_order(scn, 1, allow_relay=False).tolist() == [1, 2]
    assert offload.round_routes(scn, relaxed, allow_relay=False).tolist() == [2, 1]


def test_repair_moves_violator_to_satellite():
    scn = make_scenario([[100, 100]], [[100, 100]], uav_cpu=1e7, deadline=0.05)
    dec = make_decisions(scn, 1.0)
    assert not cost.objective(scn, dec).feasible
    route, bad = offload.repair_routes(scn, dec, dec.route)
    assert route.tolist() == [scn.K] and bad == []
    assert cost.objective(scn, dec.evolve(route=route)).feasible


def test_repair_reports_hopeless_devices():
    scn = make_scenario([[100, 100]], [[100, 100]], uav_cpu=1e7, deadline=1e-4)
    route, bad = offload.repair_routes(scn, make_decisions(scn, 1.0), [0])
    assert bad == [0]


@pytest.mark.parametrize("seed", range(5))
def test_single_device_matches_exhaustive(seed):
    gen = np.random.default_rng(seed)
    scn = make_scenario(gen.uniform(0, 600, (1, 2)), [[150, 300], [450, 300]], uav_cpu=gen.uniform(0.3e9, 3e9),
                        deadline=0.02)
    dec = make_decisions(scn, 0.8)
    best, best_q = offload.exhaustive_routes(scn, dec)
    res = offload.solve_uav_offload(scn, dec)
    q = cost.objective(scn, dec.evolve(route=res.route)).objective_q
    if np.isfinite(best_q):
        assert q <= best_q * (1 + 1e-9)


def test_zero_size_tasks_leave_routes_alone():
    scn, dec = random_case(0)
    dec = dec.evolve(beta=np.zeros(scn.J))
    res = offload.solve_uav_offload(scn, dec)
    assert res.status == "empty" and np.array_equal(res.route, dec.route) and res.infeasible == []


def test_exhaustive_guard():
    scn = generate_scenario(SimConfig(num_devices=7, num_uavs=2), 0)
    with pytest.raises(offload.GuardError):
        offload.exhaustive_routes(scn, make_decisions(scn, 0.5))


def test_config_validation():
    with pytest.raises(ValueError):
        offload.BsumConfig(mu=0.0)
    with pytest.raises(ValueError):
        offload.BsumConfig(max_outer=0)
