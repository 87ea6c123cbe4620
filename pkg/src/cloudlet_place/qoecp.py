"""Fixed-K placement: minimise the average access delay of all requests.

``mdc`` handles undesignated capacities (K-medoids over the delay metric),
``mde`` designated ones (largest cloudlet first, greedy delay-sorted fill).
``heuristic_baseline`` is ``mde`` with the AP order re-sorted for every
evaluation, and ``random_placement`` / ``topk_placement`` are the naive
location rules.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .delaymap import DELAY_TOL, sort_key, sorted_order
from .errors import ConstraintViolation, InfeasibleCapacityError, InvalidConfigError
from .netmodel import CloudletSpec, rng_stream

# relative tolerance when comparing accumulated delays
TOTAL_RTOL = 1e-9


def _close(a, b):
    return abs(a - b) <= TOTAL_RTOL * max(1.0, abs(a), abs(b))


@dataclass(frozen=True, eq=False)
class Placement:
    """K chosen sites and the request-to-cloudlet assignment.

    ``request_cloudlet[j][m]`` is the index ``i`` (into ``locations``) of the
    cloudlet serving request ``m`` of AP ``j`` (the x flags); ``z[j, i]`` counts
    the requests of AP ``j`` sent to cloudlet ``i``. ``capacities`` is ``None``
    for undesignated placements, otherwise aligned with ``locations``.
    """

    locations: tuple
    request_cloudlet: tuple
    z: np.ndarray
    demand_load: np.ndarray
    request_load: np.ndarray
    total_delay: float
    avg_delay: float
    capacities: tuple | None = None
    algorithm: str = ""
    info: dict = field(default_factory=dict)

    @property
    def k(self):
        return len(self.locations)

    def labels(self):
        """Cloudlet index per AP: the one serving most of its requests
        (lowest index on ties, -1 for APs without requests)."""
        out = np.full(self.z.shape[0], -1, dtype=np.int64)
        busy = self.z.sum(axis=1) > 0
        out[busy] = np.argmax(self.z[busy], axis=1)
        return out


@dataclass(frozen=True)
class Evaluation:
    total_delay: float
    avg_delay: float
    demand_load: np.ndarray
    request_load: np.ndarray


def _totals(inst, dmap, locations, request_cloudlet):
    k = len(locations)
    n = inst.n
    z = np.zeros((n, k), dtype=np.int64)
    demand_load = np.zeros(k, dtype=np.int64)
    for j, (dem, lab) in enumerate(zip(inst.requests, request_cloudlet)):
        if lab.size:
            z[j] = np.bincount(lab, minlength=k)
            demand_load += np.bincount(lab, weights=dem, minlength=k).astype(np.int64)
    total = float(np.sum(z * dmap.delay[:, list(locations)])) if k else 0.0
    return z, demand_load, total


def make_placement(inst, dmap, locations, request_cloudlet, capacities=None,
                   algorithm="", total_delay=None, info=None):
    """Assemble a Placement; ``total_delay`` is the algorithm's own figure when
    it tracks one, otherwise it is computed from the assignment."""
    locations = tuple(int(s) for s in locations)
    request_cloudlet = tuple(np.asarray(a, dtype=np.int64) for a in request_cloudlet)
    z, demand_load, total = _totals(inst, dmap, locations, request_cloudlet)
    if total_delay is None:
        total_delay = total
    r_tot = inst.total_requests
    return Placement(
        locations=locations,
        request_cloudlet=request_cloudlet,
        z=z,
        demand_load=demand_load,
        request_load=z.sum(axis=0),
        total_delay=float(total_delay),
        avg_delay=float(total_delay) / r_tot if r_tot else 0.0,
        capacities=None if capacities is None else tuple(int(c) for c in capacities),
        algorithm=algorithm,
        info=dict(info or {}),
    )


def evaluate(inst, dmap, placement, spec=None):
    """Recompute delays and loads from scratch and check C1-C7.

    Raises ConstraintViolation naming the first violated constraint.
    """
    locs = list(placement.locations)
    k = len(locs)
    if k < 1 or (spec is not None and k != spec.count):
        raise ConstraintViolation("C1", f"expected {spec.count if spec else '>=1'} cloudlets, got {k}")
    site_set = set(inst.sites.tolist())
    for s in locs:
        if s not in site_set:
            raise ConstraintViolation("C1", f"location {s} is not a candidate site")
    if len(set(locs)) != k:
        raise ConstraintViolation("C2", "two cloudlets share a location")
    if len(placement.request_cloudlet) != inst.n:
        raise ConstraintViolation("C4", "assignment does not cover every AP")
    for j, (dem, lab) in enumerate(zip(inst.requests, placement.request_cloudlet)):
        if lab.shape != dem.shape:
            raise ConstraintViolation("C4", f"AP {j}: {lab.size} of {dem.size} requests assigned")
        if not np.issubdtype(lab.dtype, np.integer):
            raise ConstraintViolation("C6", f"AP {j}: assignment flags are not integral")
        if lab.size and (lab.min() < 0 or lab.max() >= k):
            raise ConstraintViolation("C5", f"AP {j}: request sent to an unplaced cloudlet")
    z, demand_load, total = _totals(inst, dmap, locs, placement.request_cloudlet)
    if placement.z.shape != z.shape or not np.array_equal(placement.z, z):
        raise ConstraintViolation("C3", "z counts disagree with per-request flags")
    if not np.array_equal(z.sum(axis=1), inst.weights):
        raise ConstraintViolation("C4", "some AP's requests are not all assigned")
    caps = placement.capacities
    if spec is not None and spec.is_designated:
        if caps is None or sorted(caps, reverse=True) != list(spec.capacities):
            raise ConstraintViolation("C7", "placement capacities differ from the CloudletSpec")
    if caps is not None:
        over = np.flatnonzero(demand_load > np.asarray(caps))
        if over.size:
            i = int(over[0])
            raise ConstraintViolation(
                "C7", f"cloudlet at {locs[i]} holds {demand_load[i]} MHz > capacity {caps[i]}")
    r_tot = inst.total_requests
    return Evaluation(total, total / r_tot if r_tot else 0.0, demand_load, z.sum(axis=0))


def certify(inst, dmap, placement, spec=None):
    """evaluate() plus agreement with the placement's self-reported figures."""
    ev = evaluate(inst, dmap, placement, spec)
    if not _close(ev.total_delay, placement.total_delay):
        raise ConstraintViolation(
            "objective", f"self-reported D_tot {placement.total_delay} != recomputed {ev.total_delay}")
    if not np.array_equal(ev.demand_load, placement.demand_load):
        raise ConstraintViolation("objective", "self-reported loads differ")
    return ev


# -- shared helpers -----------------------------------------------------------

def _as_spec(spec_or_k):
    if isinstance(spec_or_k, CloudletSpec):
        return spec_or_k
    return CloudletSpec(int(spec_or_k))


def _check_k(inst, k):
    if not 1 <= k <= inst.sites.size:
        raise InvalidConfigError(f"k={k} must lie in [1, {inst.sites.size}]")


def nearest_cloudlet(dmap, locations):
    """Index of the nearest location for every AP; ties go to the lowest site id."""
    locs = np.asarray(locations, dtype=np.int64)
    d = dmap.delay[:, locs]
    near = d <= d.min(axis=1, keepdims=True) + DELAY_TOL
    return np.argmin(np.where(near, locs, np.iinfo(np.int64).max), axis=1)


def _argmin_by_site(costs, site_ids):
    """Position of the minimal cost; near-ties go to the lowest site id."""
    costs = np.asarray(costs, dtype=float)
    best = costs.min()
    near = costs <= best + TOTAL_RTOL * max(1.0, abs(best))
    return int(np.argmin(np.where(near, site_ids, np.iinfo(np.int64).max)))


def _whole_ap_assignment(inst, labels):
    return tuple(np.full(r.size, lab, dtype=np.int64) for r, lab in zip(inst.requests, labels))


# -- MDC ------------------------------------------------------------------------

def mdc(inst, dmap, k, seed=0, max_iters=100, n_init=1):
    """Minimal Delay Clustering for undesignated capacities.

    K-medoids over the request-weighted delay: random initial centres drawn
    from the sites, then alternate nearest-centre assignment of whole APs and a
    per-cluster swap to the member site with least summed weighted delay, until
    the centre set is stable. If ``max_iters`` is hit the best iterate is kept.
    With ``n_init > 1`` independent starts run and the best result wins.
    """
    _check_k(inst, k)
    if max_iters < 1 or n_init < 1:
        raise InvalidConfigError("max_iters and n_init must be >= 1")
    best = None
    for start in range(n_init):
        locs, labels, n_iter, converged = _kmedoids(inst, dmap, k, rng_stream(seed, 3, start), max_iters)
        cost = float(inst.weights @ dmap.delay[np.arange(inst.n), locs[labels]])
        if best is None or cost < best[0] - TOTAL_RTOL * max(1.0, cost):
            best = (cost, locs, labels, n_iter, converged)
    _, locs, labels, n_iter, converged = best
    return make_placement(inst, dmap, locs, _whole_ap_assignment(inst, labels),
                          algorithm="MDC", info={"n_iter": n_iter, "converged": converged})


def _kmedoids(inst, dmap, k, rng, max_iters):
    w = inst.weights.astype(float)
    d = dmap.delay
    rows = np.arange(inst.n)
    is_site = np.zeros(inst.n, dtype=bool)
    is_site[inst.sites] = True
    centers = np.sort(rng.choice(inst.sites, size=k, replace=False))
    best = None
    for it in range(1, max_iters + 1):
        labels = nearest_cloudlet(dmap, centers)
        cost = float(w @ d[rows, centers[labels]])
        if best is None or cost < best[0] - TOTAL_RTOL * max(1.0, cost):
            best = (cost, centers.copy(), labels.copy())
        new = centers.copy()
        for i in range(k):
            members = np.flatnonzero(labels == i)
            cand = members[is_site[members]]
            if cand.size == 0:
                continue
            scores = w[members] @ d[np.ix_(members, cand)]
            new[i] = cand[_argmin_by_site(scores, cand)]
        if np.array_equal(np.sort(new), centers):
            return centers, labels, it, True
        centers = np.sort(new)
    _, centers, labels = best
    return centers, labels, max_iters, False


# -- MDE and the repeated-sorting heuristic -------------------------------------

class _FillState:
    """Unassigned requests per AP, kept as a suffix of the ascending-demand order."""

    def __init__(self, inst):
        self.order = [np.argsort(r, kind="stable") for r in inst.requests]
        self.cum = [np.concatenate(([0], np.cumsum(r[o]))) for r, o in zip(inst.requests, self.order)]
        self.count = inst.weights.copy()
        self.taken = np.zeros(inst.n, dtype=np.int64)
        self.rem_demand = np.array([c[-1] for c in self.cum], dtype=np.int64)
        self.assign = [np.full(r.size, -1, dtype=np.int64) for r in inst.requests]

    @property
    def rem_count(self):
        return self.count - self.taken

    def fits(self, j, free):
        """How many more of AP j's smallest unassigned requests fit in ``free``."""
        cum = self.cum[j]
        t = self.taken[j]
        return int(np.searchsorted(cum, cum[t] + free, side="right")) - 1 - t

    def score(self, order, dist, cap):
        """Tentative fill of a cloudlet with capacity ``cap`` walking ``order``
        (APs with unassigned requests, nearest first); ``dist`` is the delay
        from the candidate site to every AP. Returns (cost, n_whole, partial_ap,
        n_partial)."""
        cs = np.cumsum(self.rem_demand[order])
        r = int(np.searchsorted(cs, cap, side="right"))
        whole = order[:r]
        cost = float(np.dot(self.rem_count[whole], dist[whole]))
        if r < order.size:
            j = int(order[r])
            q = self.fits(j, cap - (int(cs[r - 1]) if r else 0))
            return cost + q * float(dist[j]), r, j, q
        return cost, r, -1, 0

    def commit(self, j, q, cloudlet):
        t = self.taken[j]
        self.assign[j][self.order[j][t:t + q]] = cloudlet
        self.taken[j] = t + q
        self.rem_demand[j] = self.cum[j][-1] - self.cum[j][t + q]


def _cloudlet_place(inst, dmap, spec, resort, name):
    if not spec.is_designated:
        raise InvalidConfigError(f"{name} needs designated capacities")
    _check_k(inst, spec.count)
    spec.check_feasible(inst)
    caps = spec.capacities  # already decreasing
    state = _FillState(inst)
    free_sites = [int(s) for s in inst.sites]
    locations = []
    d_tot = 0.0
    for i, cap in enumerate(caps):
        best = None
        busy = np.flatnonzero(state.rem_count > 0)
        for s in free_sites:
            dist = dmap.delay[s]
            if resort:
                order = sorted_order(dist[busy], busy)
            else:
                row = dmap.sorted_row(s)
                order = row[state.rem_count[row] > 0]
            cost, r, j, q = state.score(order, dist, cap)
            if best is None or cost < best[0] - TOTAL_RTOL * max(1.0, abs(cost)):
                best = (cost, s, order[:r], j, q)
        cost, s, whole, j, q = best
        for a in whole:
            state.commit(a, state.rem_count[a], i)
        if j >= 0 and q:
            state.commit(j, q, i)
        d_tot += cost
        locations.append(s)
        free_sites.remove(s)
    d_tot += _repair_leftovers(inst, dmap, state, locations, caps)
    return make_placement(inst, dmap, locations, state.assign, caps, name, total_delay=d_tot)


def _repair_leftovers(inst, dmap, state, locations, caps):
    """Give every still-unassigned request (largest first) to the nearest
    cloudlet with room. Returns the added delay."""
    left = [(int(inst.requests[j][m]), j, int(m))
            for j in np.flatnonzero(state.rem_count > 0)
            for m in state.order[j][state.taken[j]:]]
    if not left:
        return 0.0
    load = np.zeros(len(caps), dtype=np.int64)
    for j, a in enumerate(state.assign):
        hit = a >= 0
        np.add.at(load, a[hit], inst.requests[j][hit])
    free = np.asarray(caps, dtype=np.int64) - load
    locs = np.asarray(locations)
    added = 0.0
    for dem, j, m in sorted(left, key=lambda t: (-t[0], t[1], t[2])):
        ok = np.flatnonzero(free >= dem)
        if ok.size == 0:
            raise InfeasibleCapacityError(
                f"request {m} of AP {j} ({dem} MHz) fits in no cloudlet")
        i = int(ok[_argmin_by_site(dmap.delay[j, locs[ok]], locs[ok])])
        state.assign[j][m] = i
        free[i] -= dem
        added += float(dmap.delay[j, locs[i]])
    state.taken[:] = state.count
    return added


def mde(inst, dmap, spec):
    """Minimal Delay Efficient heuristic (cloudletPlace over precomputed rows)."""
    return _cloudlet_place(inst, dmap, spec, resort=False, name="MDE")


def heuristic_baseline(inst, dmap, spec):
    """Same placement as ``mde`` but re-sorts the candidate APs from scratch for
    every (cloudlet, site) evaluation; kept as the runtime comparison target."""
    return _cloudlet_place(inst, dmap, spec, resort=True, name="Heuristic")


# -- Random and Top-K -------------------------------------------------------------

def random_placement(inst, dmap, spec_or_k, seed=0):
    spec = _as_spec(spec_or_k)
    _check_k(inst, spec.count)
    locs = rng_stream(seed, 4).choice(inst.sites, size=spec.count, replace=False)
    return assign_to_locations(inst, dmap, locs, spec, "Random")


def topk_placement(inst, dmap, spec_or_k):
    spec = _as_spec(spec_or_k)
    _check_k(inst, spec.count)
    w = inst.weights[inst.sites]
    locs = inst.sites[np.lexsort((inst.sites, -w))[:spec.count]]
    return assign_to_locations(inst, dmap, locs, spec, "TopK")


def assign_to_locations(inst, dmap, locations, spec, name=""):
    """Nearest-feasible assignment to fixed locations.

    Undesignated: every AP goes whole to its nearest location. Designated:
    cloudlet ``i`` (capacity ``spec.capacities[i]``) sits at ``locations[i]``;
    (AP, cloudlet) pairs are visited by ascending delay and each AP's smallest
    unassigned requests are moved while they fit, then leftovers are repaired.
    """
    locs = np.asarray(locations, dtype=np.int64)
    if not spec.is_designated:
        labels = nearest_cloudlet(dmap, locs)
        return make_placement(inst, dmap, locs, _whole_ap_assignment(inst, labels), algorithm=name)
    spec.check_feasible(inst)
    caps = spec.capacities
    state = _FillState(inst)
    free = np.asarray(caps, dtype=np.int64).copy()
    d = dmap.delay[:, locs]
    aps, cls = np.nonzero(np.ones_like(d, dtype=bool))
    order = np.lexsort((locs[cls], aps, sort_key(d).ravel()))
    for p in order:
        j, i = int(aps[p]), int(cls[p])
        if state.rem_count[j] == 0 or free[i] <= 0:
            continue
        q = state.fits(j, free[i])
        if q:
            before = state.rem_demand[j]
            state.commit(j, q, i)
            free[i] -= before - state.rem_demand[j]
    _repair_leftovers(inst, dmap, state, locs, caps)
    return make_placement(inst, dmap, locs, state.assign, caps, name)

