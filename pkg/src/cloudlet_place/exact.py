"""Exact solutions for small instances and an LP-format exporter.

Two independent routes reach the optimum:

* ``method="enumerate"``: every K-subset of sites, each scored by
  :func:`exact_assignment` (nearest site when undesignated; successive
  shortest paths when all demands are equal; branch and bound otherwise).
* ``method="milp"``: one mixed-integer program over placement and
  aggregated assignment variables, solved with HiGHS through
  ``scipy.optimize.milp``.

Designated-capacity assignment with unequal demands embeds bin packing, so the
branch-and-bound path refuses instances with more than ``MAX_BNB_REQUESTS``
requests.
"""
from __future__ import annotations

import itertools
import math
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import coo_matrix

from .errors import (BudgetExceededError, InfeasibleCapacityError, InvalidConfigError,
                     TimeLimitExceeded)
from .netmodel import CloudletSpec
from .qoecp import TOTAL_RTOL, _check_k, make_placement, nearest_cloudlet

DEFAULT_SUBSET_LIMIT = 2_000_000
MAX_BNB_REQUESTS = 200
MILP_SITE_LIMIT = 120
_BNB_NODE_LIMIT = 5_000_000
_CHUNK = 20_000


# -- capacitated assignment -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FlowProblem:
    """Requests (per-AP demand arrays) to be served by sinks.

    ``costs[j, l]`` is the per-request cost of sending AP ``j``'s requests to
    sink ``l``; ``capacities`` is ``None`` for unbounded sinks.
    """

    supplies: tuple
    costs: np.ndarray
    capacities: np.ndarray | None = None
    sink_ids: np.ndarray | None = None

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=float)
        if costs.ndim != 2 or costs.shape[0] != len(self.supplies):
            raise InvalidConfigError("cost matrix must be (n_aps, n_sinks)")
        if (costs < 0).any():
            raise InvalidConfigError("costs must be nonnegative")
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "supplies", tuple(np.asarray(s, dtype=np.int64) for s in self.supplies))
        if self.capacities is not None:
            object.__setattr__(self, "capacities", np.asarray(self.capacities, dtype=np.int64))
        ids = np.arange(costs.shape[1]) if self.sink_ids is None else np.asarray(self.sink_ids)
        object.__setattr__(self, "sink_ids", ids)

    @property
    def n_sinks(self):
        return self.costs.shape[1]


@dataclass(frozen=True, eq=False)
class Assignment:
    request_sink: tuple
    z: np.ndarray
    cost: float


def _assignment_from_counts(problem, z):
    """Expand per-(AP, sink) counts into per-request flags, row-major."""
    flags = tuple(np.repeat(np.arange(problem.n_sinks), zj) for zj in z)
    cost = float(np.sum(z * problem.costs))
    return Assignment(flags, z, cost)


def exact_assignment(problem, deadline=None):
    """Minimum total cost assignment of every request to a sink within capacity."""
    k = problem.n_sinks
    if problem.capacities is None:
        d = problem.costs
        near = d <= d.min(axis=1, keepdims=True) + 1e-9
        lab = np.argmin(np.where(near, problem.sink_ids, np.iinfo(np.int64).max), axis=1)
        z = np.zeros((len(problem.supplies), k), dtype=np.int64)
        z[np.arange(len(lab)), lab] = [s.size for s in problem.supplies]
        return _assignment_from_counts(problem, z)
    total = sum(int(s.sum()) for s in problem.supplies)
    if total > int(problem.capacities.sum()):
        raise InfeasibleCapacityError(f"demand {total} exceeds capacity {int(problem.capacities.sum())}")
    values = np.unique(np.concatenate([s for s in problem.supplies] + [np.zeros(0, np.int64)]))
    if values.size <= 1:
        g = int(values[0]) if values.size else 1
        supply = np.array([s.size for s in problem.supplies], dtype=np.int64)
        z = transport_ssp(supply, problem.capacities // g, problem.costs)
        return _assignment_from_counts(problem, z)
    return _gap_branch_and_bound(problem, deadline)


def transport_ssp(supply, capacity, costs, arc_cap=None):
    """Integral min-cost transportation by successive shortest paths.

    ``supply[j]`` units leave source ``j``; sink ``l`` accepts at most
    ``capacity[l]`` and arc ``(j, l)`` carries at most ``arc_cap[j, l]``
    (unbounded when ``arc_cap`` is None). Returns the (n, k) integer flows.
    """
    supply = np.asarray(supply, dtype=np.int64)
    capacity = np.asarray(capacity, dtype=np.int64)
    costs = np.asarray(costs, dtype=float)
    n, k = costs.shape
    if supply.sum() > capacity.sum():
        raise InfeasibleCapacityError("supply exceeds sink capacity")
    big = np.iinfo(np.int64).max
    arc_cap = np.full((n, k), big, dtype=np.int64) if arc_cap is None else np.asarray(arc_cap, np.int64)
    flow = np.zeros((n, k), dtype=np.int64)
    left = supply.copy()
    room = capacity.copy()
    cols = np.arange(k)
    rows_ = np.arange(n)
    # Bellman-Ford over the residual bipartite graph: sources 0..n-1, sinks n..n+k-1
    while left.sum() > 0:
        dist = np.full(n + k, np.inf)
        pred = np.full(n + k, -1, dtype=np.int64)
        dist[:n][left > 0] = 0.0
        fwd_ok = flow < arc_cap
        back_ok = flow > 0
        for _ in range(n + k + 1):
            changed = False
            cand = np.where(fwd_ok, dist[:n, None] + costs, np.inf)
            best_src = np.argmin(cand, axis=0)
            best_val = cand[best_src, cols]
            upd = best_val < dist[n:] - 1e-12
            if upd.any():
                dist[n:][upd] = best_val[upd]
                pred[n:][upd] = best_src[upd]
                changed = True
            back = np.where(back_ok, dist[n:][None, :] - costs, np.inf)
            best_snk = np.argmin(back, axis=1)
            best_val = back[rows_, best_snk]
            upd = best_val < dist[:n] - 1e-12
            if upd.any():
                dist[:n][upd] = best_val[upd]
                pred[:n][upd] = n + best_snk[upd]
                changed = True
            if not changed:
                break
        open_sinks = np.flatnonzero(room > 0)
        reach = dist[n + open_sinks]
        if open_sinks.size == 0 or not np.isfinite(reach).any():
            raise InfeasibleCapacityError("no augmenting path")
        l = int(open_sinks[np.argmin(reach)])
        path = []
        node = n + l
        while pred[node] != -1:
            path.append((int(pred[node]), node))
            node = int(pred[node])
            if len(path) > n + k:
                raise RuntimeError("negative cycle in residual graph")
        src = node
        amount = min(int(left[src]), int(room[l]))
        for a, b in path:
            if a >= n:  # backward arc cancels flow on (b, a - n)
                amount = min(amount, int(flow[b, a - n]))
            else:
                amount = min(amount, int(arc_cap[a, b - n] - flow[a, b - n]))
        for a, b in path:
            if a < n:
                flow[a, b - n] += amount
            else:
                flow[b, a - n] -= amount
        left[src] -= amount
        room[l] -= amount
    return flow


def _gap_branch_and_bound(problem, deadline=None):
    """Exact assignment for unequal demands.

    Requests of one AP with equal demand form a class. Each node solves the
    linear relaxation exactly as a transportation problem in demand units
    (``transport_ssp`` with per-unit cost ``cost / demand``); a class whose
    flow to some sink is not a whole number of requests is branched on
    (at most floor / at least ceil requests on that arc).
    """
    r_tot = sum(s.size for s in problem.supplies)
    if r_tot > MAX_BNB_REQUESTS:
        raise BudgetExceededError(
            f"{r_tot} requests exceed the exact-assignment cap of {MAX_BNB_REQUESTS}")
    cls_ap, cls_g, cls_cnt = [], [], []
    for j, s in enumerate(problem.supplies):
        vals, cnts = np.unique(s, return_counts=True)
        cls_ap.extend([j] * vals.size)
        cls_g.extend(vals.tolist())
        cls_cnt.extend(cnts.tolist())
    g = np.array(cls_g, dtype=np.int64)
    cnt = np.array(cls_cnt, dtype=np.int64)
    k = problem.n_sinks
    item_cost = problem.costs[np.array(cls_ap, dtype=np.int64)].reshape(len(g), k)
    unit_cost = item_cost / np.maximum(g, 1)[:, None]
    caps = problem.capacities
    best_cost, best_x = math.inf, None
    stack = [(np.zeros((len(g), k), np.int64), np.tile(cnt[:, None], (1, k)))]
    nodes = 0
    while stack:
        lower, upper = stack.pop()
        nodes += 1
        if nodes > _BNB_NODE_LIMIT:
            raise BudgetExceededError("exact assignment node limit reached")
        if deadline is not None and nodes % 64 == 0 and time.monotonic() > deadline:
            raise TimeLimitExceeded("exact assignment exceeded its time limit")
        rem = cnt - lower.sum(axis=1)
        free = caps - (lower * g[:, None]).sum(axis=0)
        if (rem < 0).any() or (free < 0).any():
            continue
        base = float(np.sum(lower * item_cost))
        try:
            flow = transport_ssp(rem * g, free, unit_cost, (upper - lower) * g[:, None])
        except InfeasibleCapacityError:
            continue
        bound = base + float(np.sum(flow * unit_cost))
        if bound >= best_cost - 1e-9 * max(1.0, best_cost):
            continue
        whole, part = np.divmod(flow, g[:, None])
        if not part.any():
            best_cost, best_x = bound, lower + whole
            continue
        inc = _round_gap(lower + whole, cnt, g, caps, item_cost)
        if inc is not None and inc[0] < best_cost - 1e-9 * max(1.0, inc[0]):
            best_cost, best_x = inc
        c, l = (int(v) for v in np.argwhere(part)[0])
        f = flow[c, l] / g[c]
        hi_upper = upper.copy()
        hi_upper[c, l] = lower[c, l] + math.floor(f)
        lo_lower = lower.copy()
        lo_lower[c, l] += math.ceil(f)
        stack.append((lower, hi_upper))
        stack.append((lo_lower, upper))
    if best_x is None:
        raise InfeasibleCapacityError("requests cannot be packed into the sinks")
    flags = []
    for j, s in enumerate(problem.supplies):
        f = np.zeros(s.size, dtype=np.int64)
        for c in np.flatnonzero(np.array(cls_ap) == j):
            idx = np.flatnonzero(s == g[c])
            f[idx] = np.repeat(np.arange(k), best_x[c])
        flags.append(f)
    z = np.stack([np.bincount(f, minlength=k) for f in flags]) if flags else np.zeros((0, k), np.int64)
    return Assignment(tuple(flags), z, float(np.sum(z * problem.costs)))


def _round_gap(x, cnt, g, caps, item_cost):
    """Complete a partial integral assignment greedily (largest demand first,
    cheapest sink with room). Returns (cost, x) or None."""
    x = x.copy()
    free = caps - (x * g[:, None]).sum(axis=0)
    for c in np.argsort(-g, kind="stable"):
        for _ in range(int(cnt[c] - x[c].sum())):
            ok = np.flatnonzero(free >= g[c])
            if ok.size == 0:
                return None
            l = int(ok[np.argmin(item_cost[c, ok])])
            x[c, l] += 1
            free[l] -= g[c]
    return float(np.sum(x * item_cost)), x


# -- optimal placement --------------------------------------------------------------

def _n_subsets(inst, spec):
    n = math.comb(int(inst.sites.size), spec.count)
    if spec.is_designated:
        # distinct arrangements of the capacity multiset over the chosen sites
        n *= math.factorial(spec.count)
        for c in Counter(spec.capacities).values():
            n //= math.factorial(c)
    return n


def opt_qoecp(inst, dmap, spec, subset_limit=DEFAULT_SUBSET_LIMIT, method="auto",
              time_limit=None):
    """Optimal placement of ``spec.count`` cloudlets (minimum D_avg).

    ``method`` is ``"enumerate"``, ``"milp"`` or ``"auto"`` (enumeration for
    undesignated capacities within ``subset_limit``, the MILP otherwise).
    Enumeration breaks ties by the lexicographically smallest location list.
    """
    if not isinstance(spec, CloudletSpec):
        spec = CloudletSpec(int(spec))
    _check_k(inst, spec.count)
    spec.check_feasible(inst)
    deadline = None if time_limit is None else time.monotonic() + time_limit
    n_sub = _n_subsets(inst, spec)
    method = _pick_method(inst, spec, subset_limit, method)
    if method == "enumerate":
        if n_sub > subset_limit:
            raise BudgetExceededError(
                f"{n_sub} candidate subsets exceed the limit of {subset_limit}; "
                "export the model with lp_export and use an external solver")
        if spec.is_designated:
            return _enumerate_designated(inst, dmap, spec, deadline)
        return _enumerate_undesignated(inst, dmap, spec.count, deadline)
    _check_site_limit(inst)
    return _milp_qoecp(inst, dmap, spec, time_limit)


def _pick_method(inst, spec, subset_limit, method):
    if method not in ("auto", "enumerate", "milp"):
        raise InvalidConfigError(f"unknown method {method!r}")
    if method != "auto":
        return method
    n_sub = _n_subsets(inst, spec)
    if spec.is_designated:
        small = n_sub <= 2_000 and (inst.total_requests <= MAX_BNB_REQUESTS or _uniform(inst))
    else:
        small = n_sub <= subset_limit
    return "enumerate" if small else "milp"


def _check_site_limit(inst):
    if inst.sites.size > MILP_SITE_LIMIT:
        raise BudgetExceededError(
            f"{inst.sites.size} sites exceed the MILP limit of {MILP_SITE_LIMIT}; "
            "export the model with lp_export and use an external solver")


def _uniform(inst):
    vals = [r for r in inst.requests if r.size]
    return not vals or min(int(r.min()) for r in vals) == inst.max_demand


def _subset_chunks(sites, k):
    it = itertools.combinations(sites.tolist(), k)
    while True:
        block = list(itertools.islice(it, _CHUNK))
        if not block:
            return
        yield np.array(block, dtype=np.int64)


def _uncap_costs(dmap, w, subsets):
    d = dmap.delay[:, subsets]  # (n, m, k)
    return w @ d.min(axis=2)


def _check_deadline(deadline):
    if deadline is not None and time.monotonic() > deadline:
        raise TimeLimitExceeded("exact search exceeded its time limit")


def _enumerate_undesignated(inst, dmap, k, deadline):
    w = inst.weights.astype(float)
    best_cost, best = math.inf, None
    for block in _subset_chunks(inst.sites, k):
        _check_deadline(deadline)
        costs = _uncap_costs(dmap, w, block)
        low = costs.min()
        i = int(np.argmax(costs <= low + TOTAL_RTOL * max(1.0, low)))
        # blocks arrive in lexicographic order, so only a strict improvement
        # can displace the current best
        if best is None or costs[i] < best_cost - TOTAL_RTOL * max(1.0, best_cost):
            best_cost, best = float(costs[i]), block[i]
    labels = nearest_cloudlet(dmap, best)
    flags = tuple(np.full(r.size, lab, dtype=np.int64) for r, lab in zip(inst.requests, labels))
    return make_placement(inst, dmap, best, flags, algorithm="OPT", info={"method": "enumerate"})


def _distinct_permutations(values):
    """Distinct orderings of a multiset in lexicographic order."""
    a = sorted(values)
    while True:
        yield tuple(a)
        i = len(a) - 2
        while i >= 0 and a[i] >= a[i + 1]:
            i -= 1
        if i < 0:
            return
        j = len(a) - 1
        while a[j] <= a[i]:
            j -= 1
        a[i], a[j] = a[j], a[i]
        a[i + 1:] = reversed(a[i + 1:])


def _enumerate_designated(inst, dmap, spec, deadline):
    w = inst.weights.astype(float)
    blocks = list(_subset_chunks(inst.sites, spec.count))
    subsets = np.concatenate(blocks) if blocks else np.zeros((0, spec.count), np.int64)
    lower = np.concatenate([_uncap_costs(dmap, w, b) for b in blocks])
    order = np.argsort(lower, kind="stable")
    perms = list(_distinct_permutations(spec.capacities))
    best = (math.inf, None, None, None)
    for idx in order:
        if lower[idx] > best[0] + TOTAL_RTOL * max(1.0, best[0]):
            break
        _check_deadline(deadline)
        locs = subsets[idx]
        for caps in perms:
            prob = FlowProblem(inst.requests, dmap.delay[:, locs], np.array(caps), locs)
            try:
                a = exact_assignment(prob, deadline)
            except InfeasibleCapacityError:
                continue
            tie = abs(a.cost - best[0]) <= TOTAL_RTOL * max(1.0, a.cost)
            if a.cost < best[0] and not tie or (tie and (tuple(locs), caps) < (tuple(best[1]), best[2])):
                best = (a.cost, locs, caps, a)
    if best[1] is None:
        raise InfeasibleCapacityError("no subset admits a feasible assignment")
    cost, locs, caps, a = best
    return make_placement(inst, dmap, locs, a.request_sink, caps, algorithm="OPT",
                          info={"method": "enumerate"})


def _milp_qoecp(inst, dmap, spec, time_limit=None, d_cut=None, gap=0.0, feasibility=False):
    """Aggregated MILP: binaries place cloudlets, continuous or integer
    variables carry requests. Identical capacities collapse to one binary per
    site. ``d_cut`` adds the row D_tot <= d_cut * R_tot; the model is then
    infeasible (None is returned) when no placement meets that average."""
    sites = inst.sites
    S = sites.size
    n = inst.n
    w = inst.weights
    d = dmap.delay[:, sites]  # (n, S)
    caps = spec.capacities
    identical = caps is None or len(set(caps)) == 1
    K = spec.count
    n_p = S if identical else K * S
    cols = []  # (var kind, payload)
    obj = []
    integrality = []
    lb, ub = [], []
    rows, cols_idx, vals, rlo, rhi = [], [], [], [], []
    nrow = 0

    def add_row(entries, lo, hi):
        nonlocal nrow
        for c, v in entries:
            rows.append(nrow)
            cols_idx.append(c)
            vals.append(v)
        rlo.append(lo)
        rhi.append(hi)
        nrow += 1

    for _ in range(n_p):
        obj.append(0.0)
        integrality.append(1)
        lb.append(0.0)
        ub.append(1.0)

    def p_cols(l):
        return [l] if identical else [i * S + l for i in range(K)]

    # assignment variables
    uniform = caps is None or _uniform(inst)
    classes = []  # (j, demand, count)
    if caps is None or uniform:
        g = 1 if caps is None else int(inst.max_demand)
        for j in range(n):
            classes.append((j, g, int(w[j])))
    else:
        for j, r in enumerate(inst.requests):
            vals_j, counts = np.unique(r, return_counts=True)
            classes.extend((j, int(v), int(c)) for v, c in zip(vals_j, counts))
    base = n_p
    for ci, (j, g, cnt) in enumerate(classes):
        for l in range(S):
            obj.append(float(d[j, l]))
            integrality.append(0 if (caps is None or uniform) else 1)
            lb.append(0.0)
            ub.append(float(cnt))
    var = lambda ci, l: base + ci * S + l  # noqa: E731
    for ci, (j, g, cnt) in enumerate(classes):
        add_row([(var(ci, l), 1.0) for l in range(S)], cnt, cnt)
        if cnt:
            for l in range(S):  # only placed sites serve (C5)
                add_row([(var(ci, l), 1.0)] + [(p, -float(cnt)) for p in p_cols(l)], -np.inf, 0.0)
    if identical:
        add_row([(l, 1.0) for l in range(S)], K, K)
    else:
        for i in range(K):
            add_row([(i * S + l, 1.0) for l in range(S)], 1, 1)
        for l in range(S):
            add_row([(i * S + l, 1.0) for i in range(K)], -np.inf, 1)
    if caps is not None:
        for l in range(S):
            entries = [(var(ci, l), float(g)) for ci, (j, g, cnt) in enumerate(classes) if cnt]
            if identical:
                entries.append((l, -float(caps[0])))
            else:
                entries.extend((i * S + l, -float(caps[i])) for i in range(K))
            add_row(entries, -np.inf, 0.0)
    if d_cut is not None:
        add_row([(i, c) for i, c in enumerate(obj) if c], -np.inf,
                float(d_cut) * inst.total_requests * (1 + TOTAL_RTOL))
    A = coo_matrix((vals, (rows, cols_idx)), shape=(nrow, len(obj))).tocsr()
    options = {"mip_rel_gap": gap, "presolve": True}
    if feasibility:
        obj = [0.0] * len(obj)
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    res = milp(np.array(obj), integrality=np.array(integrality),
               bounds=Bounds(np.array(lb), np.array(ub)),
               constraints=LinearConstraint(A, np.array(rlo), np.array(rhi)), options=options)
    if res.status == 1:
        raise TimeLimitExceeded("MILP hit its time limit")
    if res.x is None and d_cut is not None and res.status == 2:
        return None
    if res.x is None:
        raise InfeasibleCapacityError(f"MILP found no solution: {res.message}")
    x = res.x
    if identical:
        open_ = np.flatnonzero(x[:S] > 0.5)
        locs = sites[open_]
        cap_of = None if caps is None else [caps[0]] * K
    else:
        pm = x[:n_p].reshape(K, S) > 0.5
        pairs = sorted((int(np.flatnonzero(pm[i])[0]), i) for i in range(K))
        open_ = np.array([l for l, _ in pairs])
        locs = sites[open_]
        cap_of = [caps[i] for _, i in pairs]
    if caps is None:
        labels = nearest_cloudlet(dmap, locs)
        flags = tuple(np.full(r.size, lab, dtype=np.int64) for r, lab in zip(inst.requests, labels))
    else:
        flags = _flags_from_classes(inst, classes, x, var, open_, uniform)
        if flags is None:  # fractional transportation vertex; resolve exactly
            prob = FlowProblem(inst.requests, dmap.delay[:, locs], np.array(cap_of), locs)
            flags = exact_assignment(prob).request_sink
    return make_placement(inst, dmap, locs, flags, cap_of, algorithm="OPT",
                          info={"method": "milp"})


def _flags_from_classes(inst, classes, x, var, open_, uniform):
    pos = {int(l): i for i, l in enumerate(open_)}
    flags = [np.full(r.size, -1, dtype=np.int64) for r in inst.requests]
    for ci, (j, g, cnt) in enumerate(classes):
        if not cnt:
            continue
        vals = np.array([x[var(ci, l)] for l in open_])
        counts = np.rint(vals).astype(np.int64)
        if np.abs(vals - counts).max() > 1e-6 or counts.sum() != cnt:
            return None
        if uniform:
            idx = np.arange(inst.requests[j].size)
        else:
            idx = np.flatnonzero(inst.requests[j] == g)
        start = 0
        for l, c in zip(open_, counts):
            flags[j][idx[start:start + c]] = pos[int(l)]
            start += c
    if any((f < 0).any() for f in flags):
        return None
    return tuple(flags)


def opt_dbocp(inst, dmap, d_max, capacity_rule=None, subset_limit=DEFAULT_SUBSET_LIMIT,
              method="auto", k_cap=None, search="linear", time_limit=None):
    """Smallest K whose optimal D_avg meets ``d_max``.

    ``capacity_rule(inst, k) -> CloudletSpec`` gives designated capacities;
    ``None`` means undesignated. ``search="binary"`` is only valid without a
    capacity rule, where the optimum is monotone in K. With a capacity rule the
    scan starts at the undesignated answer (capacities can only raise D_avg).

    The objective is K alone, so at the minimal K any placement meeting the
    budget is optimal. On the MILP route each K is therefore a feasibility
    question (the cut D_tot <= D * R_tot with a zero objective), and a
    heuristic placement that already meets the budget serves as the witness.
    Enumeration returns the minimum-delay placement at that K.
    """
    from .dbocp import KSolution, _budget

    budget = _budget(d_max)
    k_cap = inst.sites.size if k_cap is None else int(k_cap)
    _check_k(inst, k_cap)

    def spec_for(k):
        spec = CloudletSpec(k) if capacity_rule is None else capacity_rule(inst, k)
        if spec.is_designated and sum(spec.capacities) < inst.total_demand:
            return None
        return spec

    def solve(k):
        spec = spec_for(k)
        if spec is None:
            return None
        try:
            return opt_qoecp(inst, dmap, spec, subset_limit, method, time_limit)
        except InfeasibleCapacityError:
            return None

    if search == "binary":
        if capacity_rule is not None:
            raise InvalidConfigError("binary search needs undesignated capacities")
        lo, hi = 1, k_cap
        top = solve(hi)
        if not budget.met(top.avg_delay):
            return KSolution(hi, top, False)
        best = top
        while lo < hi:
            mid = (lo + hi) // 2
            p = solve(mid)
            if budget.met(p.avg_delay):
                hi, best = mid, p
            else:
                lo = mid + 1
        return KSolution(best.k, best, True)
    if search != "linear":
        raise InvalidConfigError(f"unknown search {search!r}")
    k_lo = 1
    if capacity_rule is not None:
        free = opt_dbocp(inst, dmap, budget, None, subset_limit, method, k_cap, "linear", time_limit)
        if free.met:
            k_lo = free.k
        else:
            k_lo = k_cap
    deadline = None if time_limit is None else time.monotonic() + time_limit
    for k in range(k_lo, k_cap + 1):
        spec = spec_for(k)
        if spec is None:
            continue
        if _pick_method(inst, spec, subset_limit, method) == "milp":
            p = _witness(inst, dmap, spec, budget)
            if p is None:
                left = None if deadline is None else max(deadline - time.monotonic(), 1.0)
                _check_site_limit(inst)
                try:
                    p = _milp_qoecp(inst, dmap, spec, left, d_cut=budget.d_max_ms,
                                    feasibility=True)
                except InfeasibleCapacityError:
                    continue
        else:
            p = solve(k)
        if p is not None and budget.met(p.avg_delay):
            return KSolution(k, p, True)
    for k in range(k_cap, 0, -1):  # report the largest feasible K as unmet
        p = solve(k)
        if p is not None:
            return KSolution(k, p, False)
    raise InfeasibleCapacityError("no K up to k_cap admits a feasible assignment")


def _witness(inst, dmap, spec, budget):
    """A heuristic placement meeting the budget, relabelled as OPT, or None."""
    from .qoecp import mdc, mde

    try:
        h = mde(inst, dmap, spec) if spec.is_designated else mdc(inst, dmap, spec.count)
    except InfeasibleCapacityError:
        return None
    if not budget.met(h.avg_delay):
        return None
    return make_placement(inst, dmap, h.locations, h.request_cloudlet, h.capacities,
                          algorithm="OPT", info={"method": f"witness:{h.algorithm}"})


# -- ILP model and LP export ----------------------------------------------------------

@dataclass
class IlpModel:
    """A linear model in named-variable form."""

    sense: str
    objective: dict
    rows: list = field(default_factory=list)  # (name, {var: coef}, op, rhs)
    binaries: list = field(default_factory=list)
    generals: list = field(default_factory=list)
    upper: dict = field(default_factory=dict)
    comment: str = ""

    def variables(self):
        seen = dict.fromkeys(self.binaries)
        seen.update(dict.fromkeys(self.generals))
        for _, coefs, _, _ in self.rows:
            seen.update(dict.fromkeys(coefs))
        seen.update(dict.fromkeys(self.objective))
        return list(seen)

    def row_count(self, prefix=None):
        return sum(1 for r in self.rows if prefix is None or r[0].split("_")[0] == prefix)

    def to_lp(self):
        out = []
        for line in self.comment.splitlines():
            out.append(f"\\ {line}")
        out.append("Minimize" if self.sense == "min" else "Maximize")
        out.extend(_wrap(" obj:", self.objective))
        out.append("Subject To")
        for name, coefs, op, rhs in self.rows:
            lines = _wrap(f" {name}:", coefs)
            lines[-1] += f" {op} {_num(rhs)}"
            out.extend(lines)
        if self.upper:
            out.append("Bounds")
            out.extend(f" 0 <= {v} <= {_num(u)}" for v, u in self.upper.items())
        if self.binaries:
            out.append("Binaries")
            out.extend(_chunks(self.binaries))
        if self.generals:
            out.append("Generals")
            out.extend(_chunks(self.generals))
        out.append("End")
        return "\n".join(out) + "\n"

    def solve(self, time_limit=None):
        """Solve with HiGHS; returns ({var: value}, objective)."""
        names = self.variables()
        col = {v: i for i, v in enumerate(names)}
        c = np.zeros(len(names))
        for v, a in self.objective.items():
            c[col[v]] = a
        if self.sense != "min":
            c = -c
        integ = np.zeros(len(names))
        ub = np.full(len(names), np.inf)
        for v in self.binaries:
            integ[col[v]] = 1
            ub[col[v]] = 1
        for v in self.generals:
            integ[col[v]] = 1
        for v, u in self.upper.items():
            ub[col[v]] = u
        r, cc, vals, lo, hi = [], [], [], [], []
        for i, (_, coefs, op, rhs) in enumerate(self.rows):
            for v, a in coefs.items():
                r.append(i)
                cc.append(col[v])
                vals.append(a)
            lo.append(rhs if op in ("=", ">=") else -np.inf)
            hi.append(rhs if op in ("=", "<=") else np.inf)
        A = coo_matrix((vals, (r, cc)), shape=(len(self.rows), len(names))).tocsr()
        options = {"mip_rel_gap": 0.0}
        if time_limit is not None:
            options["time_limit"] = float(time_limit)
        res = milp(c, integrality=integ, bounds=Bounds(np.zeros(len(names)), ub),
                   constraints=LinearConstraint(A, lo, hi), options=options)
        if res.x is None:
            raise InfeasibleCapacityError(f"model has no solution: {res.message}")
        obj = float(res.fun) if self.sense == "min" else -float(res.fun)
        return {v: float(res.x[i]) for v, i in col.items()}, obj


def _num(x):
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def _wrap(head, coefs, per_line=8):
    terms = []
    for v, a in coefs.items():
        sign = "-" if a < 0 else "+"
        terms.append(f"{sign} {_num(abs(a))} {v}")
    if terms and terms[0].startswith("+ "):
        terms[0] = terms[0][2:]
    if not terms:
        return [f"{head} 0"]
    lines = []
    for i in range(0, len(terms), per_line):
        chunk = " ".join(terms[i:i + per_line])
        lines.append(f"{head} {chunk}" if i == 0 else f"   {chunk}")
    return lines


def _chunks(names, per_line=10):
    return [" " + " ".join(names[i:i + per_line]) for i in range(0, len(names), per_line)]


def build_model(inst, dmap, kind="qoecp", spec=None, d_max=None):
    """The per-request ILP with variables ``p_i_l``, ``x_l_j_m`` and ``z_j_l``.

    ``kind="qoecp"`` needs ``spec`` (K and optional capacities) and minimises
    the average delay under C1-C7. ``kind="dbocp"`` minimises the number of
    placed cloudlets under C2-C8 with C1 relaxed to ``<= 1``; the cloudlet
    pool is ``spec`` if given, otherwise one undesignated cloudlet per site.
    """
    sites = [int(s) for s in inst.sites]
    r_tot = inst.total_requests
    if kind == "qoecp":
        if spec is None:
            raise InvalidConfigError("qoecp export needs a CloudletSpec")
    elif kind == "dbocp":
        if d_max is None:
            raise InvalidConfigError("dbocp export needs d_max")
        d_max = float(getattr(d_max, "d_max_ms", d_max))
        spec = spec or CloudletSpec(len(sites))
    else:
        raise InvalidConfigError(f"unknown problem kind {kind!r}")
    K = spec.count
    caps = spec.capacities
    p = {(i, l): f"p_{i}_{l}" for i in range(K) for l in sites}
    x = {(l, j, m): f"x_{l}_{j}_{m}" for l in sites for j in range(inst.n)
         for m in range(inst.requests[j].size)}
    z = {(j, l): f"z_{j}_{l}" for j in range(inst.n) for l in sites}
    if kind == "qoecp":
        objective = {z[j, l]: float(dmap.delay[j, l]) / r_tot
                     for j in range(inst.n) for l in sites if dmap.delay[j, l] > 0}
        head = f"QOECP: minimise average access delay, n={inst.n} K={K}"
    else:
        objective = {v: 1.0 for v in p.values()}
        head = f"DBOCP: minimise cloudlet count, n={inst.n} pool={K} D={d_max!r}"
    model = IlpModel("min", objective, comment=head + ("\ncapacities " + " ".join(map(str, caps)) if caps else ""))
    op1 = "=" if kind == "qoecp" else "<="
    for i in range(K):
        model.rows.append((f"C1_{i}", {p[i, l]: 1.0 for l in sites}, op1, 1.0))
    for l in sites:
        model.rows.append((f"C2_{l}", {p[i, l]: 1.0 for i in range(K)}, "<=", 1.0))
    for j in range(inst.n):
        for l in sites:
            coefs = {x[l, j, m]: 1.0 for m in range(inst.requests[j].size)}
            coefs[z[j, l]] = -1.0
            model.rows.append((f"C3_{j}_{l}", coefs, "=", 0.0))
    for j in range(inst.n):
        model.rows.append((f"C4_{j}", {z[j, l]: 1.0 for l in sites}, "=", float(inst.requests[j].size)))
    for j in range(inst.n):
        w = float(inst.requests[j].size)
        for l in sites:
            coefs = {z[j, l]: 1.0}
            coefs.update({p[i, l]: -w for i in range(K)})
            model.rows.append((f"C5_{j}_{l}", coefs, "<=", 0.0))
    if caps is not None:
        for l in sites:
            coefs = {x[l, j, m]: float(inst.requests[j][m]) for j in range(inst.n)
                     for m in range(inst.requests[j].size)}
            coefs.update({p[i, l]: -float(caps[i]) for i in range(K)})
            model.rows.append((f"C7_{l}", coefs, "<=", 0.0))
    if kind == "dbocp":
        coefs = {z[j, l]: float(dmap.delay[j, l]) / r_tot
                 for j in range(inst.n) for l in sites if dmap.delay[j, l] > 0}
        model.rows.append(("C8", coefs, "<=", float(d_max)))
    model.binaries = list(p.values()) + list(x.values())
    model.generals = list(z.values())
    model.upper = {z[j, l]: float(inst.requests[j].size) for j in range(inst.n) for l in sites}
    return model


def lp_export(inst, dmap, kind="qoecp", spec=None, d_max=None):
    """The ILP as CPLEX-LP text, ready for an external solver."""
    return build_model(inst, dmap, kind, spec, d_max).to_lp()
