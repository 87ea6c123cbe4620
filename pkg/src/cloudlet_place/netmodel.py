"""Network data model, seeded topology generator and instance file I/O.

Random streams
--------------
All randomness comes from numpy's ``PCG64`` bit generator, keyed through
``SeedSequence`` so that each concern owns an independent stream:

* ``[seed, 0, attempt]`` -- topology attempt ``attempt`` (0..63). One
  ``random()`` draw per unordered AP pair in ``triu_indices`` order decides the
  edge, then one ``uniform(lo, hi)`` draw per kept edge gives its delay.
* ``[seed, 1]`` -- connectivity repair: ``permutation(n)`` followed by, for each
  position ``t >= 1``, one ``integers(t)`` draw and, only when an edge is added,
  one ``uniform(lo, hi)`` delay draw.
* ``[seed, 2]`` -- workload: ``integers(lo, hi, endpoint=True, size=n)`` request
  counts, then one demand draw per request in AP order.

The stream layout is part of the instance format contract: changing it changes
every generated instance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InfeasibleCapacityError, InvalidConfigError, ParseError

FORMAT_VERSION = "v1"
MAX_TOPOLOGY_ATTEMPTS = 64


class Edge(NamedTuple):
    u: int
    v: int
    delay_ms: float


def _readonly(a):
    a = np.array(a, dtype=np.int64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """An AP graph with per-AP request demands and candidate cloudlet sites.

    ``requests[j]`` holds the demands (MHz) of the requests at AP ``j`` in
    generation order. Edges are stored canonically (``u < v``, sorted).
    Connectivity is checked by the generator and the file loader rather than
    here, so a disconnected instance can still be built for testing.
    """

    requests: tuple
    edges: tuple
    sites: np.ndarray
    seed: int = 0

    def __post_init__(self):
        reqs = tuple(_readonly(r) for r in self.requests)
        n = len(reqs)
        if n < 1:
            raise InvalidConfigError("an instance needs at least one AP")
        for j, r in enumerate(reqs):
            if r.ndim != 1 or (r.size and r.min() <= 0):
                raise InvalidConfigError(f"AP {j}: demands must be positive integers")
        seen = set()
        edges = []
        for e in self.edges:
            u, v, d = int(e[0]), int(e[1]), float(e[2])
            if u == v:
                raise InvalidConfigError(f"self-loop at AP {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise InvalidConfigError(f"edge ({u}, {v}) references a missing AP")
            if not (d > 0 and math.isfinite(d)):
                raise InvalidConfigError(f"edge ({u}, {v}) has non-positive delay {d}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise InvalidConfigError(f"duplicate edge {key}")
            seen.add(key)
            edges.append(Edge(key[0], key[1], d))
        edges.sort()
        sites = np.unique(np.asarray(self.sites, dtype=np.int64))
        if len(sites) != len(self.sites):
            raise InvalidConfigError("duplicate site id")
        if sites.size == 0 or sites[0] < 0 or sites[-1] >= n:
            raise InvalidConfigError("sites must be a nonempty subset of the AP ids")
        sites.setflags(write=False)
        object.__setattr__(self, "requests", reqs)
        object.__setattr__(self, "edges", tuple(edges))
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n(self):
        return len(self.requests)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def weights(self):
        """omega(v_j): request count per AP."""
        return np.array([r.size for r in self.requests], dtype=np.int64)

    @property
    def total_requests(self):
        return int(sum(r.size for r in self.requests))

    @property
    def total_demand(self):
        return int(sum(int(r.sum()) for r in self.requests))

    @property
    def max_demand(self):
        return max((int(r.max()) for r in self.requests if r.size), default=0)

    def is_connected(self):
        return _n_components(self.n, self.edges) == 1

    def __eq__(self, other):
        if not isinstance(other, NetworkInstance):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.edges == other.edges
            and np.array_equal(self.sites, other.sites)
            and len(self.requests) == len(other.requests)
            and all(np.array_equal(a, b) for a, b in zip(self.requests, other.requests))
        )

    __hash__ = None


def _n_components(n, edges):
    if n == 1:
        return 1
    u = np.array([e[0] for e in edges], dtype=np.int64)
    v = np.array([e[1] for e in edges], dtype=np.int64)
    graph = coo_matrix((np.ones(len(u)), (u, v)), shape=(n, n))
    ncomp, _ = connected_components(graph, directed=False)
    return ncomp


@dataclass(frozen=True)
class CloudletSpec:
    """K cloudlets, either undesignated or with fixed capacities (MHz).

    Designated capacities are stored sorted in decreasing order.
    """

    count: int
    capacities: tuple | None = None

    def __post_init__(self):
        if int(self.count) < 1:
            raise InvalidConfigError("cloudlet count must be >= 1")
        object.__setattr__(self, "count", int(self.count))
        if self.capacities is not None:
            caps = tuple(sorted((int(c) for c in self.capacities), reverse=True))
            if len(caps) != self.count:
                raise InvalidConfigError(
                    f"{len(caps)} capacities given for {self.count} cloudlets")
            if caps[-1] <= 0:
                raise InvalidConfigError("capacities must be positive")
            object.__setattr__(self, "capacities", caps)

    @classmethod
    def undesignated(cls, k):
        return cls(k)

    @classmethod
    def designated(cls, capacities):
        capacities = list(capacities)
        return cls(len(capacities), tuple(capacities))

    @property
    def is_designated(self):
        return self.capacities is not None

    def check_feasible(self, inst):
        if self.is_designated and sum(self.capacities) < inst.total_demand:
            raise InfeasibleCapacityError(
                f"total capacity {sum(self.capacities)} < total demand {inst.total_demand}")


def identical_capacities(inst, k):
    """K equal capacities that always admit a feasible atomic assignment.

    Each cloudlet gets ``ceil(gamma_sum / K) + max_demand - 1``. The headroom of
    one request (minus one unit) guarantees that a greedy fill which stops only
    when the next request does not fit can never strand demand; with unit
    demands it reduces to exactly ``ceil(gamma_sum / K)``.
    """
    if k < 1:
        raise InvalidConfigError("k must be >= 1")
    cap = -(-inst.total_demand // k) + max(inst.max_demand - 1, 0)
    return CloudletSpec(k, (max(cap, 1),) * k)


def pool_capacities(pool):
    """Capacity rule drawing the K largest capacities from a fixed pool."""
    pool = sorted((int(c) for c in pool), reverse=True)

    def rule(inst, k):
        if k > len(pool):
            raise InvalidConfigError(f"capacity pool has only {len(pool)} entries, need {k}")
        return CloudletSpec(k, tuple(pool[:k]))

    rule.description = f"pool[{len(pool)}]"
    return rule


identical_capacities.description = "identical ceil(gamma_sum/K)+max_demand-1"


def _check_range(name, rng_, positive=False, integer=False):
    lo, hi = rng_
    if lo > hi:
        raise InvalidConfigError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
    if positive and lo <= 0:
        raise InvalidConfigError(f"{name}: values must be positive")
    if lo < 0:
        raise InvalidConfigError(f"{name}: values must be nonnegative")
    if integer and (int(lo) != lo or int(hi) != hi):
        raise InvalidConfigError(f"{name}: bounds must be integers")


def rng_stream(*key):
    """Independent PCG64 stream keyed by a tuple of nonnegative ints."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(key))))


def generate_topology(
    n,
    edge_prob=0.02,
    delay_range=(5.0, 50.0),
    req_range=(50, 500),
    demand_range=(50, 200),
    seed=0,
):
    """Random AP graph in the GT-ITM flat-random regime.

    Every unordered pair is linked with probability ``edge_prob``. If none of
    64 attempts is connected, the last attempt is repaired by adding the
    fewest edges needed along a random spanning order. All APs are sites.
    """
    if n < 2:
        raise InvalidConfigError("n must be >= 2")
    if not 0 < edge_prob <= 1:
        raise InvalidConfigError("edge_prob must lie in (0, 1]")
    _check_range("delay_range", delay_range, positive=True)
    _check_range("req_range", req_range, integer=True)
    _check_range("demand_range", demand_range, positive=True, integer=True)
    if seed < 0 or seed >= 2**64:
        raise InvalidConfigError("seed must be a 64-bit unsigned integer")
    lo, hi = float(delay_range[0]), float(delay_range[1])

    iu, iv = np.triu_indices(n, 1)
    for attempt in range(MAX_TOPOLOGY_ATTEMPTS):
        rng = rng_stream(seed, 0, attempt)
        keep = rng.random(iu.size) < edge_prob
        delays = rng.uniform(lo, hi, size=int(keep.sum()))
        edges = [Edge(int(u), int(v), float(d)) for u, v, d in zip(iu[keep], iv[keep], delays)]
        if _n_components(n, edges) == 1:
            break
    else:
        edges = _repair(n, edges, lo, hi, rng_stream(seed, 1))

    wl = rng_stream(seed, 2)
    counts = wl.integers(int(req_range[0]), int(req_range[1]), endpoint=True, size=n)
    demands = wl.integers(int(demand_range[0]), int(demand_range[1]), endpoint=True,
                          size=int(counts.sum()))
    requests = np.split(demands, np.cumsum(counts)[:-1])
    return NetworkInstance(tuple(requests), tuple(edges), np.arange(n), seed)


def _repair(n, edges, lo, hi, rng):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in edges:
        parent[find(e.u)] = find(e.v)
    edges = list(edges)
    order = rng.permutation(n)
    for t in range(1, n):
        v = int(order[t])
        u = int(order[rng.integers(t)])
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            edges.append(Edge(min(u, v), max(u, v), float(rng.uniform(lo, hi))))
    return edges


# -- instance files ---------------------------------------------------------

def save_instance(inst):
    lines = [f"wman {FORMAT_VERSION} n={inst.n} seed={inst.seed}"]
    for j, r in enumerate(inst.requests):
        lines.append(" ".join(["ap", str(j), *map(str, r.tolist())]))
    for e in inst.edges:
        lines.append(f"edge {e.u} {e.v} {e.delay_ms!r}")
    lines.append(" ".join(["sites", *map(str, inst.sites.tolist())]))
    return "\n".join(lines) + "\n"


def _int(tok, lineno, what):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"{what} {tok!r} is not an integer", lineno) from None


def load_instance(text):
    """Parse the line-oriented ``wman v1`` format. Rejects disconnected graphs."""
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    n = seed = None
    requests = {}
    edges = {}
    sites = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        head = toks[0]
        if n is None:
            if head != "wman" or len(toks) != 4 or toks[1] != FORMAT_VERSION:
                raise ParseError(f"expected header 'wman {FORMAT_VERSION} n=<n> seed=<seed>'", lineno)
            fields = dict(t.split("=", 1) for t in toks[2:] if "=" in t)
            if set(fields) != {"n", "seed"}:
                raise ParseError("header must carry n= and seed=", lineno)
            n = _int(fields["n"], lineno, "n")
            seed = _int(fields["seed"], lineno, "seed")
            if n < 1:
                raise ParseError("n must be >= 1", lineno)
            continue
        if head == "ap":
            if len(toks) < 2:
                raise ParseError("ap line needs an id", lineno)
            j = _int(toks[1], lineno, "AP id")
            if not 0 <= j < n:
                raise ParseError(f"AP id {j} out of range [0, {n})", lineno)
            if j in requests:
                raise ParseError(f"duplicate AP {j}", lineno)
            dem = [_int(t, lineno, "demand") for t in toks[2:]]
            if any(d <= 0 for d in dem):
                raise ParseError("demands must be positive", lineno)
            requests[j] = dem
        elif head == "edge":
            if len(toks) != 4:
                raise ParseError("edge line needs '<u> <v> <delay_ms>'", lineno)
            u = _int(toks[1], lineno, "endpoint")
            v = _int(toks[2], lineno, "endpoint")
            try:
                d = float(toks[3])
            except ValueError:
                raise ParseError(f"delay {toks[3]!r} is not a number", lineno) from None
            if u == v:
                raise ParseError(f"self-loop at AP {u}", lineno)
            for x in (u, v):
                if not 0 <= x < n:
                    raise ParseError(f"edge references missing AP {x}", lineno)
            if not (d > 0 and math.isfinite(d)):
                raise ParseError(f"delay must be positive and finite, got {toks[3]}", lineno)
            key = (min(u, v), max(u, v))
            if key in edges:
                raise ParseError(f"duplicate edge {key[0]}-{key[1]}", lineno)
            edges[key] = d
        elif head == "sites":
            if sites is not None:
                raise ParseError("more than one sites line", lineno)
            sites = [_int(t, lineno, "site id") for t in toks[1:]]
            for s in sites:
                if not 0 <= s < n:
                    raise ParseError(f"site {s} is not an AP id", lineno)
            if len(set(sites)) != len(sites):
                raise ParseError("duplicate site id", lineno)
            if not sites:
                raise ParseError("sites line is empty", lineno)
        else:
            raise ParseError(f"unknown directive {head!r}", lineno)
    if n is None:
        raise ParseError("missing header")
    missing = sorted(set(range(n)) - set(requests))
    if missing:
        raise ParseError(f"no ap line for AP {missing[0]}")
    if sites is None:
        raise ParseError("missing sites line")
    inst = NetworkInstance(
        tuple(requests[j] for j in range(n)),
        tuple(Edge(u, v, d) for (u, v), d in edges.items()),
        np.array(sites),
        seed,
    )
    if not inst.is_connected():
        raise ParseError("graph is not connected")
    return inst


def read_instance(path):
    with open(path, encoding="utf-8") as fh:
        return load_instance(fh.read())


def write_instance(inst, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(save_instance(inst))


def instance_from_lists(requests: Sequence, edges: Sequence, sites=None, seed=0):
    """Convenience constructor for hand-built instances."""
    sites = range(len(requests)) if sites is None else sites
    return NetworkInstance(tuple(requests), tuple(Edge(*e) for e in edges), np.array(list(sites)), seed)
