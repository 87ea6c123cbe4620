import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudlet_place import UnreachableError, all_pairs_delay, generate_topology, instance_from_lists
from cloudlet_place.delaymap import sorted_order


def bellman_ford(inst):
    """Independent oracle: repeated edge relaxation from every source."""
    n = inst.n
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for _ in range(n):
        changed = False
        for u, v, w in inst.edges:
            for a, b in ((u, v), (v, u)):
                cand = dist[:, a] + w
                better = cand < dist[:, b]
                if better.any():
                    dist[better, b] = cand[better]
                    changed = True
        if not changed:
            break
    return dist


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.integers(0, 10**9), st.floats(0.05, 0.5))
def test_matches_bellman_ford(n, seed, p):
    inst = generate_topology(n, edge_prob=p, req_range=(0, 3), demand_range=(1, 1), seed=seed)
    dmap = all_pairs_delay(inst)
    np.testing.assert_allclose(dmap.delay, bellman_ford(inst), rtol=1e-12, atol=1e-9)


def test_matches_networkx():
    inst = generate_topology(80, seed=11)
    g = nx.Graph()
    g.add_weighted_edges_from(inst.edges)
    ref = dict(nx.all_pairs_dijkstra_path_length(g))
    dmap = all_pairs_delay(inst)
    for j in range(inst.n):
        for l in range(inst.n):
            assert dmap.delay[j, l] == pytest.approx(ref[j][l], rel=1e-12)


def test_symmetric_zero_diagonal_and_read_only():
    dmap = all_pairs_delay(generate_topology(50, seed=2))
    assert np.array_equal(dmap.delay, dmap.delay.T)
    assert (np.diag(dmap.delay) == 0).all()
    with pytest.raises(ValueError):
        dmap.delay[0, 1] = 0


def test_rows_sorted_by_delay_then_id():
    dmap = all_pairs_delay(generate_topology(40, seed=4))
    for s in range(dmap.n):
        row = dmap.sorted_row(s)
        assert row[0] == s
        d = dmap.delay[s, row]
        assert (np.diff(d) >= -1e-9).all()
        assert sorted(row.tolist()) == list(range(dmap.n))


def test_ties_broken_by_lowest_id():
    # star around AP 2: every leaf sits at delay 1 from the centre
    inst = instance_from_lists([[1]] * 5, [(2, 0, 1.0), (2, 1, 1.0), (2, 3, 1.0), (2, 4, 1.0)])
    dmap = all_pairs_delay(inst)
    assert dmap.sorted_row(2).tolist() == [2, 0, 1, 3, 4]
    assert dmap.sorted_row(4).tolist() == [4, 2, 0, 1, 3]


def test_float_noise_does_not_override_id_order():
    d = np.array([0.3, 0.1 + 0.2, 0.30000000001])
    assert sorted_order(d).tolist() == [0, 1, 2]


def test_unreachable_raises():
    inst = instance_from_lists([[1], [1], [1]], [(0, 1, 1.0)])
    with pytest.raises(UnreachableError):
        all_pairs_delay(inst)
