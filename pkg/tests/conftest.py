import numpy as np
import pytest

from cloudlet_place import all_pairs_delay, generate_topology, instance_from_lists

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def path3():
    """A - B - C with unit delays and one unit-demand request per AP."""
    inst = instance_from_lists([[1], [1], [1]], [(0, 1, 1.0), (1, 2, 1.0)])
    return inst, all_pairs_delay(inst)


@pytest.fixture(scope="session")
def small_instances():
    out = []
    for seed in range(6):
        inst = generate_topology(12, edge_prob=0.2, req_range=(1, 6), demand_range=(1, 5), seed=seed)
        out.append((inst, all_pairs_delay(inst)))
    return out


def brute_force_assignment(supplies, costs, caps):
    """Min cost over every per-request choice (tiny cases only)."""
    import itertools

    items = [(j, g) for j, s in enumerate(supplies) for g in s]
    k = costs.shape[1]
    best = np.inf
    for choice in itertools.product(range(k), repeat=len(items)):
        load = np.zeros(k)
        cost = 0.0
        for (j, g), l in zip(items, choice):
            load[l] += g
            cost += costs[j, l]
        if caps is None or (load <= caps).all():
            best = min(best, cost)
    return best
