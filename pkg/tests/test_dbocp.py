import numpy as np
import pytest

from cloudlet_place import (CloudletSpec, DelayBudget, InfeasibleCapacityError, InvalidConfigError,
                            KSolution, all_pairs_delay, evaluate, generate_topology,
                            identical_capacities, mdc, mde, mkc, mkh, pool_capacities,
                            random_k_search, random_placement, topk_k_search)


@pytest.fixture(scope="module")
def inst40():
    inst = generate_topology(40, seed=4)
    return inst, all_pairs_delay(inst)


def _searches(inst, dmap, d):
    return {
        "mkc": mkc(inst, dmap, d, seed=3),
        "mkh": mkh(inst, dmap, d),
        "random": random_k_search(inst, dmap, d, seed=3),
        "topk": topk_k_search(inst, dmap, d),
        "random-c": random_k_search(inst, dmap, d, seed=3, capacity_rule=identical_capacities),
        "topk-c": topk_k_search(inst, dmap, d, capacity_rule=identical_capacities),
    }


def test_budget_type():
    assert DelayBudget(5).d_max_ms == 5.0
    assert DelayBudget(0).met(0.0)
    assert DelayBudget(10).met(10.0 + 1e-12)
    assert not DelayBudget(10).met(10.01)
    for bad in (-1.0, float("nan")):
        with pytest.raises(InvalidConfigError):
            DelayBudget(bad)
    with pytest.raises(InvalidConfigError):
        mkc(generate_topology(5, seed=0), all_pairs_delay(generate_topology(5, seed=0)), -3.0)


def test_ksolution_checks_k(inst40):
    inst, dmap = inst40
    p = mdc(inst, dmap, 3)
    with pytest.raises(InvalidConfigError):
        KSolution(4, p, True)


def test_slack_budget_needs_one_cloudlet(inst40):
    inst, dmap = inst40
    for name, sol in _searches(inst, dmap, float(dmap.delay.max())).items():
        assert sol.k == 1 and sol.met, name
    unit = generate_topology(40, demand_range=(1, 1), seed=4)
    sol = mkh(unit, all_pairs_delay(unit), 1e6)
    assert sol.k == 1 and sol.placement.capacities == (unit.total_demand,)


def test_zero_budget_forces_every_site():
    inst = generate_topology(9, req_range=(1, 5), seed=2)
    dmap = all_pairs_delay(inst)
    for search in (mkc, random_k_search, topk_k_search):
        sol = search(inst, dmap, 0.0, k_cap=9)
        assert sol.k == 9 and sol.met and sol.placement.avg_delay == 0.0


def test_unsatisfiable_budget_stops_at_cap(inst40):
    inst, dmap = inst40
    for search in (mkc, topk_k_search):
        sol = search(inst, dmap, 1e-6, k_cap=10)
        assert sol.k == 10 and not sol.met
    sol = mkh(inst, dmap, 1e-6, k_cap=10)
    assert sol.k == 10 and not sol.met


@pytest.mark.parametrize("d", [10.0, 20.0, 30.0])
def test_met_solutions_satisfy_c8_when_recomputed(inst40, d):
    inst, dmap = inst40
    for name, sol in _searches(inst, dmap, d).items():
        ev = evaluate(inst, dmap, sol.placement)
        assert sol.k == len(sol.placement.locations)
        if sol.met:
            assert ev.avg_delay <= d + 1e-9, name


def test_scan_is_minimal(inst40):
    inst, dmap = inst40
    d = 22.0
    sol = mkc(inst, dmap, d, seed=7)
    assert sol.met and sol.k > 1
    for k in range(1, sol.k):
        assert mdc(inst, dmap, k, seed=7 ^ k).avg_delay > d
    sol = mkh(inst, dmap, d)
    for k in range(1, sol.k):
        assert mde(inst, dmap, identical_capacities(inst, k)).avg_delay > d
    sol = random_k_search(inst, dmap, d, seed=7)
    for k in range(1, sol.k):
        assert random_placement(inst, dmap, k, seed=7 ^ k).avg_delay > d


def test_seeded_searches_are_reproducible(inst40):
    inst, dmap = inst40
    a = mkc(inst, dmap, 20.0, seed=11)
    b = mkc(inst, dmap, 20.0, seed=11)
    assert a.k == b.k and a.placement.locations == b.placement.locations


def test_mkh_skips_short_capacity_schedules():
    inst = generate_topology(20, seed=6)
    dmap = all_pairs_delay(inst)
    big = int(inst.total_demand)
    # one cloudlet of the pool cannot hold everything; two can
    rule = pool_capacities([big // 2 + inst.max_demand, big // 2 + inst.max_demand, 10])
    sol = mkh(inst, dmap, 1e6, rule, k_cap=3)
    assert sol.k == 2 and sol.met
    with pytest.raises(InfeasibleCapacityError):
        mkh(inst, dmap, 1e6, pool_capacities([10, 10]), k_cap=2)


def test_mkh_uses_identical_capacities_per_k(inst40):
    inst, dmap = inst40
    sol = mkh(inst, dmap, 25.0)
    assert sol.placement.capacities == identical_capacities(inst, sol.k).capacities
    assert (sol.placement.demand_load <= np.array(sol.placement.capacities)).all()


def test_mkh_k_non_increasing_in_budget():
    inst = generate_topology(45, seed=9)
    dmap = all_pairs_delay(inst)
    ks = [mkh(inst, dmap, float(d)).k for d in range(15, 36)]
    assert all(b <= a for a, b in zip(ks, ks[1:])), ks


def test_mkc_trend_non_increasing_in_budget():
    inst = generate_topology(45, seed=9)
    dmap = all_pairs_delay(inst)
    ks = [mkc(inst, dmap, float(d), seed=1).k for d in range(15, 36)]
    drops = sum(b <= a for a, b in zip(ks, ks[1:]))
    assert drops >= 0.9 * (len(ks) - 1), ks
    assert ks[-1] < ks[0]


def test_mkc_needs_no_more_cloudlets_than_topk_on_most_seeds():
    inst = generate_topology(200, seed=1)
    dmap = all_pairs_delay(inst)
    topk = topk_k_search(inst, dmap, 30.0).k
    wins = sum(mkc(inst, dmap, 30.0, seed=s).k <= topk for s in range(100))
    assert wins >= 80


def test_k_cap_validation(inst40):
    inst, dmap = inst40
    with pytest.raises(InvalidConfigError):
        mkc(inst, dmap, 10.0, k_cap=41)
    with pytest.raises(InvalidConfigError):
        topk_k_search(inst, dmap, 10.0, k_cap=0)


def test_capacitated_baseline_searches_fit_capacity(inst40):
    inst, dmap = inst40
    for search in (random_k_search, topk_k_search):
        sol = search(inst, dmap, 25.0, capacity_rule=identical_capacities)
        spec = identical_capacities(inst, sol.k)
        evaluate(inst, dmap, sol.placement, spec)
        assert isinstance(spec, CloudletSpec)
