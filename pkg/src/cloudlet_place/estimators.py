"""scikit-learn style wrappers around the placement solvers.

An estimator is fitted on a ``NetworkInstance`` (the "X"); APs play the role
of samples and placed cloudlets the role of clusters, so ``labels_`` holds the
serving cloudlet of every AP and ``score`` is the negated average delay.
"""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from . import dbocp, exact, qoecp
from .delaymap import DelayMap, all_pairs_delay
from .errors import InvalidConfigError
from .netmodel import CloudletSpec, NetworkInstance, identical_capacities, pool_capacities


def check_instance(X):
    """Validate that ``X`` is a connected ``NetworkInstance``."""
    if not isinstance(X, NetworkInstance):
        raise TypeError(f"expected a NetworkInstance, got {type(X).__name__}")
    if not X.is_connected():
        raise InvalidConfigError("instance graph is disconnected")
    return X


def check_seed(random_state):
    if random_state is None:
        return 0
    if isinstance(random_state, numbers.Integral) and random_state >= 0:
        return int(random_state)
    raise InvalidConfigError(f"random_state must be a nonnegative int, got {random_state!r}")


def capacity_spec(capacities, inst, k):
    """Turn a ``capacities`` parameter into a ``CloudletSpec``.

    None is undesignated, ``"identical"`` applies ``identical_capacities`` and
    a sequence gives one capacity per cloudlet.
    """
    if capacities is None:
        return CloudletSpec(k)
    if isinstance(capacities, str):
        if capacities != "identical":
            raise InvalidConfigError(f"unknown capacities {capacities!r}")
        return identical_capacities(inst, k)
    caps = list(capacities)
    if len(caps) != k:
        raise InvalidConfigError(f"{len(caps)} capacities given for {k} cloudlets")
    return CloudletSpec.designated(caps)


def capacity_rule(capacities):
    """Per-K capacity rule for the K searches (None stays undesignated)."""
    if capacities is None:
        return None
    if isinstance(capacities, str):
        if capacities != "identical":
            raise InvalidConfigError(f"unknown capacities {capacities!r}")
        return identical_capacities
    return pool_capacities(capacities)


class _PlacerBase(ClusterMixin, BaseEstimator):
    """Shared fit/predict plumbing; subclasses implement ``_solve``."""

    def _delay_map(self, X, delay_map):
        if delay_map is None:
            return all_pairs_delay(X)
        if not isinstance(delay_map, DelayMap) or delay_map.n != X.n:
            raise InvalidConfigError("delay_map does not match the instance")
        return delay_map

    def fit(self, X, y=None, delay_map=None):
        X = check_instance(X)
        dmap = self._delay_map(X, delay_map)
        self._store(self._solve(X, dmap))
        return self

    def _store(self, placement):
        self.placement_ = placement
        self.locations_ = np.asarray(placement.locations, dtype=np.int64)
        self.cluster_centers_ = self.locations_
        self.labels_ = placement.labels()
        self.avg_delay_ = placement.avg_delay
        self.total_delay_ = placement.total_delay
        self.n_cloudlets_ = placement.k

    def predict(self, X, delay_map=None):
        """Nearest fitted cloudlet for every AP of ``X`` (same AP ids)."""
        check_is_fitted(self, "locations_")
        X = check_instance(X)
        dmap = self._delay_map(X, delay_map)
        if self.locations_.max() >= X.n:
            raise InvalidConfigError("instance has fewer APs than the fitted placement")
        return qoecp.nearest_cloudlet(dmap, self.locations_)

    def score(self, X, y=None, delay_map=None):
        """Negated average delay when ``X``'s APs use their nearest fitted cloudlet."""
        check_is_fitted(self, "locations_")
        X = check_instance(X)
        dmap = self._delay_map(X, delay_map)
        labels = self.predict(X, dmap)
        w = X.weights
        if X.total_requests == 0:
            return 0.0
        d = dmap.delay[np.arange(X.n), self.locations_[labels]]
        return -float(np.dot(w, d) / X.total_requests)


class MDCPlacer(_PlacerBase):
    """K-medoids placement for undesignated capacities."""

    def __init__(self, n_cloudlets=5, random_state=0, max_iter=100, n_init=1):
        self.n_cloudlets = n_cloudlets
        self.random_state = random_state
        self.max_iter = max_iter
        self.n_init = n_init

    def _solve(self, X, dmap):
        p = qoecp.mdc(X, dmap, self.n_cloudlets, seed=check_seed(self.random_state),
                      max_iters=self.max_iter, n_init=self.n_init)
        self.n_iter_ = p.info.get("n_iter")
        return p


class MDEPlacer(_PlacerBase):
    """Greedy placement for designated capacities (default: identical)."""

    _solver = staticmethod(qoecp.mde)

    def __init__(self, n_cloudlets=5, capacities="identical"):
        self.n_cloudlets = n_cloudlets
        self.capacities = capacities

    def _solve(self, X, dmap):
        spec = capacity_spec(self.capacities, X, self.n_cloudlets)
        if not spec.is_designated:
            raise InvalidConfigError(f"{type(self).__name__} needs designated capacities")
        return self._solver(X, dmap, spec)


class HeuristicPlacer(MDEPlacer):
    """Runtime baseline: same output as MDEPlacer, re-sorting every evaluation."""

    _solver = staticmethod(qoecp.heuristic_baseline)


class RandomPlacer(_PlacerBase):
    def __init__(self, n_cloudlets=5, capacities=None, random_state=0):
        self.n_cloudlets = n_cloudlets
        self.capacities = capacities
        self.random_state = random_state

    def _solve(self, X, dmap):
        spec = capacity_spec(self.capacities, X, self.n_cloudlets)
        return qoecp.random_placement(X, dmap, spec, seed=check_seed(self.random_state))


class TopKPlacer(_PlacerBase):
    def __init__(self, n_cloudlets=5, capacities=None):
        self.n_cloudlets = n_cloudlets
        self.capacities = capacities

    def _solve(self, X, dmap):
        return qoecp.topk_placement(X, dmap, capacity_spec(self.capacities, X, self.n_cloudlets))


class OptimalPlacer(_PlacerBase):
    """Exact optimum (subset enumeration or MILP); small instances only."""

    def __init__(self, n_cloudlets=5, capacities=None, method="auto",
                 subset_limit=exact.DEFAULT_SUBSET_LIMIT, time_limit=None):
        self.n_cloudlets = n_cloudlets
        self.capacities = capacities
        self.method = method
        self.subset_limit = subset_limit
        self.time_limit = time_limit

    def _solve(self, X, dmap):
        spec = capacity_spec(self.capacities, X, self.n_cloudlets)
        return exact.opt_qoecp(X, dmap, spec, self.subset_limit, self.method, self.time_limit)


class MinCloudletSearch(_PlacerBase):
    """Fewest cloudlets whose average delay meets ``delay_budget`` (ms).

    ``algorithm`` is one of ``mkc``, ``mkh``, ``random``, ``topk``, ``opt``.
    After fitting, ``met_`` tells whether the budget was reached.
    """

    def __init__(self, delay_budget=30.0, algorithm="mkc", capacities=None,
                 random_state=0, k_cap=None):
        self.delay_budget = delay_budget
        self.algorithm = algorithm
        self.capacities = capacities
        self.random_state = random_state
        self.k_cap = k_cap

    def _solve(self, X, dmap):
        budget = dbocp.DelayBudget(self.delay_budget)
        rule = capacity_rule(self.capacities)
        seed = check_seed(self.random_state)
        alg = self.algorithm
        if alg == "mkc":
            if rule is not None:
                raise InvalidConfigError("mkc is for undesignated capacities; use mkh")
            sol = dbocp.mkc(X, dmap, budget, seed=seed, k_cap=self.k_cap)
        elif alg == "mkh":
            sol = dbocp.mkh(X, dmap, budget, rule or identical_capacities, k_cap=self.k_cap)
        elif alg == "random":
            sol = dbocp.random_k_search(X, dmap, budget, seed=seed, k_cap=self.k_cap,
                                        capacity_rule=rule)
        elif alg == "topk":
            sol = dbocp.topk_k_search(X, dmap, budget, k_cap=self.k_cap, capacity_rule=rule)
        elif alg == "opt":
            sol = exact.opt_dbocp(X, dmap, budget, rule, k_cap=self.k_cap)
        else:
            raise InvalidConfigError(f"unknown algorithm {alg!r}")
        self.met_ = sol.met
        self.solution_ = sol
        return sol.placement
