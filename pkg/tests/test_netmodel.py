import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudlet_place import (CloudletSpec, InfeasibleCapacityError, InvalidConfigError,
                            NetworkInstance, ParseError, generate_topology, identical_capacities,
                            instance_from_lists, load_instance, pool_capacities, save_instance)
from cloudlet_place.netmodel import Edge


def test_generate_is_deterministic():
    a = generate_topology(40, seed=7)
    b = generate_topology(40, seed=7)
    c = generate_topology(40, seed=8)
    assert a == b
    assert a != c


@pytest.mark.parametrize("n", [2, 10, 60, 200])
def test_generated_graph_is_connected_and_in_range(n):
    inst = generate_topology(n, seed=3)
    assert inst.is_connected()
    assert np.array_equal(inst.sites, np.arange(n))
    delays = [e.delay_ms for e in inst.edges]
    assert min(delays) >= 5.0 and max(delays) <= 50.0
    assert inst.weights.min() >= 50 and inst.weights.max() <= 500
    dem = np.concatenate(inst.requests)
    assert dem.min() >= 50 and dem.max() <= 200
    assert all(e.u < e.v for e in inst.edges)


def test_sparse_graph_gets_repaired_with_tree_edges():
    inst = generate_topology(30, edge_prob=1e-6, seed=1)
    assert inst.is_connected()
    assert inst.n_edges == 29


@pytest.mark.parametrize("kwargs", [
    dict(n=1),
    dict(n=10, edge_prob=0.0),
    dict(n=10, delay_range=(0.0, 5.0)),
    dict(n=10, delay_range=(9.0, 5.0)),
    dict(n=10, req_range=(-1, 5)),
    dict(n=10, demand_range=(0, 5)),
    dict(n=10, seed=-1),
])
def test_generate_rejects_bad_parameters(kwargs):
    with pytest.raises(InvalidConfigError):
        generate_topology(**kwargs)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**64 - 1))
def test_save_load_round_trip(n, seed):
    inst = generate_topology(n, edge_prob=0.1, req_range=(0, 5), demand_range=(1, 9), seed=seed)
    again = load_instance(save_instance(inst))
    assert again == inst
    assert save_instance(again) == save_instance(inst)


GOOD = """wman v1 n=3 seed=0
ap 0 5 7
ap 1 3
ap 2
edge 0 1 2.5
edge 1 2 4.0
sites 0 1 2
"""


def test_load_hand_written_instance():
    inst = load_instance(GOOD)
    assert inst.n == 3
    assert inst.weights.tolist() == [2, 1, 0]
    assert inst.total_demand == 15
    assert inst.edges == (Edge(0, 1, 2.5), Edge(1, 2, 4.0))


@pytest.mark.parametrize("text,lineno,fragment", [
    (GOOD.replace("edge 1 2 4.0", "edge 2 2 4.0"), 6, "self-loop"),
    (GOOD.replace("edge 1 2 4.0", "edge 1 3 4.0"), 6, "missing AP"),
    (GOOD.replace("edge 1 2 4.0", "edge 1 0 4.0"), 6, "duplicate edge"),
    (GOOD.replace("edge 1 2 4.0", "edge 1 2 0"), 6, "positive"),
    (GOOD.replace("edge 1 2 4.0", "link 1 2 4.0"), 6, "unknown directive"),
    (GOOD.replace("ap 1 3", "ap 0 3"), 3, "duplicate AP"),
    (GOOD.replace("ap 1 3", "ap 1 -3"), 3, "positive"),
    (GOOD.replace("wman v1", "wman v9"), 1, "header"),
])
def test_parse_errors_carry_line_numbers(text, lineno, fragment):
    with pytest.raises(ParseError) as err:
        load_instance(text)
    assert err.value.lineno == lineno
    assert f"line {lineno}:" in str(err.value)
    assert fragment in str(err.value)


def test_parse_rejects_disconnected_and_incomplete():
    with pytest.raises(ParseError, match="not connected"):
        load_instance(GOOD.replace("edge 1 2 4.0\n", ""))
    with pytest.raises(ParseError, match="no ap line"):
        load_instance(GOOD.replace("ap 2\n", ""))
    with pytest.raises(ParseError, match="missing header"):
        load_instance("# nothing\n")


def test_instance_validation():
    with pytest.raises(InvalidConfigError):
        instance_from_lists([[1], [1]], [(0, 0, 1.0)])
    with pytest.raises(InvalidConfigError):
        instance_from_lists([[1], [1]], [(0, 1, -1.0)])
    with pytest.raises(InvalidConfigError):
        instance_from_lists([[1], [0]], [(0, 1, 1.0)])
    with pytest.raises(InvalidConfigError):
        instance_from_lists([[1], [1]], [(0, 1, 1.0)], sites=[0, 5])
    inst = instance_from_lists([[1], [1], [1]], [(0, 1, 1.0)])
    assert not inst.is_connected()


def test_instance_arrays_are_read_only():
    inst = generate_topology(5, seed=0)
    with pytest.raises(ValueError):
        inst.requests[0][0] = 1
    with pytest.raises(ValueError):
        inst.sites[0] = 3


def test_cloudlet_spec():
    s = CloudletSpec.designated([3, 9, 5])
    assert s.capacities == (9, 5, 3) and s.count == 3 and s.is_designated
    assert not CloudletSpec(2).is_designated
    with pytest.raises(InvalidConfigError):
        CloudletSpec(0)
    with pytest.raises(InvalidConfigError):
        CloudletSpec(2, (5,))
    with pytest.raises(InvalidConfigError):
        CloudletSpec(1, (0,))


def test_capacity_feasibility_check():
    inst = instance_from_lists([[4, 4], [4]], [(0, 1, 1.0)])
    CloudletSpec.designated([6, 6]).check_feasible(inst)
    with pytest.raises(InfeasibleCapacityError):
        CloudletSpec.designated([6, 5]).check_feasible(inst)


def test_identical_capacities():
    unit = generate_topology(10, demand_range=(1, 1), seed=2)
    spec = identical_capacities(unit, 3)
    assert spec.capacities == (-(-unit.total_requests // 3),) * 3
    mhz = generate_topology(10, seed=2)
    spec = identical_capacities(mhz, 4)
    assert spec.capacities[0] == -(-mhz.total_demand // 4) + mhz.max_demand - 1
    assert sum(spec.capacities) >= mhz.total_demand


def test_pool_capacities_takes_largest():
    rule = pool_capacities([5, 50, 20, 10])
    inst = generate_topology(5, seed=0)
    assert rule(inst, 2).capacities == (50, 20)
    with pytest.raises(InvalidConfigError):
        rule(inst, 5)


def test_instance_equality_and_hash():
    a = generate_topology(8, seed=1)
    assert a == load_instance(save_instance(a))
    with pytest.raises(TypeError):
        hash(a)
    assert isinstance(a, NetworkInstance)
