"""All-pairs shortest accumulated delay and per-AP delay-sorted neighbour rows."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import UnreachableError

# Delays closer than this (ms) are treated as equal when ordering rows.
DELAY_TOL = 1e-9
_SORT_DECIMALS = 9


@dataclass(frozen=True, eq=False)
class DelayMap:
    """Dense shortest-path delays ``delay[j, l]`` plus sorted neighbour rows.

    ``sorted_neighbors[s]`` lists every AP by ascending delay from ``s``; ties
    (within ``DELAY_TOL``) are broken by ascending AP id, so row ``s`` always
    starts with ``s`` itself.
    """

    delay: np.ndarray
    sorted_neighbors: np.ndarray

    @property
    def n(self):
        return self.delay.shape[0]

    def sorted_row(self, site):
        """The precomputed ordering for ``site``; never re-sorts."""
        return self.sorted_neighbors[site]


def sort_key(delays):
    """Rounded delays used as the primary sort key so float noise cannot
    override the id tie-break."""
    return np.round(delays, _SORT_DECIMALS)


def sorted_order(delays, ids=None):
    """Order ``ids`` by (delay, id). ``delays`` is aligned with ``ids``."""
    if ids is None:
        ids = np.arange(len(delays))
    return ids[np.lexsort((ids, sort_key(delays)))]


def all_pairs_delay(inst):
    n = inst.n
    if inst.edges:
        u, v, w = (np.array(c) for c in zip(*inst.edges))
    else:
        u = v = np.zeros(0, dtype=np.int64)
        w = np.zeros(0)
    graph = csr_matrix((w, (u.astype(np.int64), v.astype(np.int64))), shape=(n, n))
    delay = dijkstra(graph, directed=False)
    if not np.isfinite(delay).all():
        j, l = np.argwhere(~np.isfinite(delay))[0]
        raise UnreachableError(f"AP {j} cannot reach AP {l}")
    # both triangle halves are valid path lengths; take the min to make the
    # matrix exactly symmetric
    delay = np.minimum(delay, delay.T)
    np.fill_diagonal(delay, 0.0)
    key = sort_key(delay)
    ids = np.broadcast_to(np.arange(n), (n, n))
    rows = np.lexsort((ids, key), axis=1)
    delay.setflags(write=False)
    rows.setflags(write=False)
    return DelayMap(delay, rows)
