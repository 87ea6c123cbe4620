"""Minimum cloudlet count under an average-delay budget.

Every search scans K' = 1, 2, ... and stops at the first K' whose placement
meets the budget. Heuristic D_avg is not monotone in K', so a binary search
could skip the true first hit.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import InfeasibleCapacityError, InvalidConfigError
from .netmodel import CloudletSpec, identical_capacities
from .qoecp import TOTAL_RTOL, Placement, _check_k, mdc, mde, random_placement, topk_placement


@dataclass(frozen=True)
class DelayBudget:
    """Average access delay bound D in ms (zero allowed: it forces co-location)."""

    d_max_ms: float

    def __post_init__(self):
        d = float(self.d_max_ms)
        if not d >= 0:
            raise InvalidConfigError(f"delay budget must be nonnegative, got {self.d_max_ms}")
        object.__setattr__(self, "d_max_ms", d)

    def met(self, avg_delay):
        return avg_delay <= self.d_max_ms + TOTAL_RTOL * max(1.0, self.d_max_ms)


@dataclass(frozen=True)
class KSolution:
    k: int
    placement: Placement
    met: bool

    def __post_init__(self):
        if self.k != self.placement.k:
            raise InvalidConfigError("k must equal the number of placed cloudlets")


def _budget(d):
    return d if isinstance(d, DelayBudget) else DelayBudget(d)


def _k_cap(inst, k_cap):
    k_cap = inst.sites.size if k_cap is None else int(k_cap)
    _check_k(inst, k_cap)
    return k_cap


def _scan(inst, budget, k_cap, solve):
    """Linear scan; ``solve(k)`` returns a Placement or None (skip this K')."""
    budget = _budget(budget)
    last = None
    for k in range(1, _k_cap(inst, k_cap) + 1):
        p = solve(k)
        if p is None:
            continue
        last = p
        if budget.met(p.avg_delay):
            return KSolution(k, p, True)
    if last is None:
        raise InfeasibleCapacityError("no K' up to k_cap admits a feasible assignment")
    return KSolution(last.k, last, False)


def _designated(inst, capacity_rule, k):
    """Capacities for K' cloudlets, or None when they cannot hold every request."""
    spec = capacity_rule(inst, k)
    if sum(spec.capacities) < inst.total_demand:
        return None
    return spec


def mkc(inst, dmap, budget, seed=0, k_cap=None, max_iters=100):
    """MKC: clustering at K' = 1, 2, ... (seed ``seed ^ K'`` per run)."""
    return _scan(inst, budget, k_cap,
                 lambda k: mdc(inst, dmap, k, seed=seed ^ k, max_iters=max_iters))


def mkh(inst, dmap, budget, capacity_rule=identical_capacities, k_cap=None):
    """MKH: cloudletPlace at K' = 1, 2, ... with ``capacity_rule(inst, K')``.

    A K' whose generated capacities cannot cover the total demand is skipped;
    the search fails only if no K' up to ``k_cap`` is feasible.
    """
    def solve(k):
        spec = _designated(inst, capacity_rule, k)
        return None if spec is None else mde(inst, dmap, spec)

    return _scan(inst, budget, k_cap, solve)


def random_k_search(inst, dmap, budget, seed=0, k_cap=None, capacity_rule=None):
    def solve(k):
        if capacity_rule is None:
            return random_placement(inst, dmap, CloudletSpec(k), seed=seed ^ k)
        spec = _designated(inst, capacity_rule, k)
        return None if spec is None else random_placement(inst, dmap, spec, seed=seed ^ k)

    return _scan(inst, budget, k_cap, solve)


def topk_k_search(inst, dmap, budget, k_cap=None, capacity_rule=None):
    def solve(k):
        if capacity_rule is None:
            return topk_placement(inst, dmap, CloudletSpec(k))
        spec = _designated(inst, capacity_rule, k)
        return None if spec is None else topk_placement(inst, dmap, spec)

    return _scan(inst, budget, k_cap, solve)
