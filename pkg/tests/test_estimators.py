import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cloudlet_place import (HeuristicPlacer, InvalidConfigError, MDCPlacer, MDEPlacer,
                            MinCloudletSearch, OptimalPlacer, RandomPlacer, TopKPlacer,
                            all_pairs_delay, generate_topology, identical_capacities,
                            instance_from_lists, mdc, mde, mkc, opt_qoecp)


@pytest.fixture(scope="module")
def inst():
    return generate_topology(30, seed=2)


ALL = [MDCPlacer(4), MDEPlacer(4), HeuristicPlacer(4), RandomPlacer(4), TopKPlacer(4),
       RandomPlacer(4, capacities="identical"), MinCloudletSearch(25.0)]


@pytest.mark.parametrize("est", ALL, ids=lambda e: type(e).__name__)
def test_fit_sets_attributes(inst, est):
    est = clone(est).fit(inst)
    assert est.labels_.shape == (inst.n,)
    assert est.n_cloudlets_ == len(est.locations_)
    assert set(est.labels_.tolist()) <= set(range(est.n_cloudlets_))
    assert est.avg_delay_ == pytest.approx(est.total_delay_ / inst.total_requests)
    assert np.array_equal(est.cluster_centers_, est.locations_)


@pytest.mark.parametrize("est", ALL, ids=lambda e: type(e).__name__)
def test_unfitted_raises(inst, est):
    with pytest.raises(NotFittedError):
        clone(est).predict(inst)


def test_params_round_trip():
    est = MDCPlacer(n_cloudlets=7, random_state=3)
    assert est.get_params() == {"n_cloudlets": 7, "random_state": 3, "max_iter": 100, "n_init": 1}
    est.set_params(n_cloudlets=2)
    assert clone(est).n_cloudlets == 2
    assert "delay_budget" in MinCloudletSearch().get_params()


def test_matches_functional_api(inst):
    dmap = all_pairs_delay(inst)
    assert MDCPlacer(5, random_state=4).fit(inst).placement_.locations == \
        mdc(inst, dmap, 5, seed=4).locations
    spec = identical_capacities(inst, 5)
    assert MDEPlacer(5).fit(inst, delay_map=dmap).total_delay_ == mde(inst, dmap, spec).total_delay
    est = MinCloudletSearch(20.0, random_state=1).fit(inst)
    assert est.n_cloudlets_ == mkc(inst, dmap, 20.0, seed=1).k
    assert est.met_ == est.solution_.met


def test_predict_and_score_under_nearest_assignment(inst):
    est = MDCPlacer(4).fit(inst)
    assert np.array_equal(est.predict(inst), est.labels_)
    assert est.score(inst) == pytest.approx(-est.avg_delay_)
    # capacitated fits are scored as if capacities were lifted
    cap = MDEPlacer(4).fit(inst)
    assert -cap.score(inst) <= cap.avg_delay_ + 1e-9


def test_optimal_placer_small():
    small = generate_topology(10, seed=0)
    dmap = all_pairs_delay(small)
    est = OptimalPlacer(3).fit(small)
    assert est.total_delay_ == pytest.approx(opt_qoecp(small, dmap, 3).total_delay)
    assert MinCloudletSearch(1e6, algorithm="opt").fit(small).n_cloudlets_ == 1


def test_explicit_capacity_list(inst):
    caps = [inst.total_demand // 2 + inst.max_demand] * 2
    est = TopKPlacer(2, capacities=caps).fit(inst)
    assert est.placement_.capacities == tuple(caps)
    with pytest.raises(InvalidConfigError):
        TopKPlacer(3, capacities=caps).fit(inst)


@pytest.mark.parametrize("est", [
    MDEPlacer(3, capacities=None), MDCPlacer(3, random_state=-1), TopKPlacer(3, capacities="bogus"),
    MinCloudletSearch(algorithm="nope"), MinCloudletSearch(algorithm="mkc", capacities="identical"),
    MinCloudletSearch(delay_budget=-2),
])
def test_bad_parameters(inst, est):
    with pytest.raises(InvalidConfigError):
        est.fit(inst)


def test_bad_inputs(inst):
    with pytest.raises(TypeError):
        MDCPlacer(2).fit(np.zeros((3, 3)))
    broken = instance_from_lists([[1], [1], [1]], [(0, 1, 1.0)])
    with pytest.raises(InvalidConfigError):
        MDCPlacer(1).fit(broken)
    other = all_pairs_delay(generate_topology(5, seed=0))
    with pytest.raises(InvalidConfigError):
        MDCPlacer(2).fit(inst, delay_map=other)
    est = TopKPlacer(inst.n).fit(inst)  # every site, so AP ids up to 29
    with pytest.raises(InvalidConfigError):
        est.predict(generate_topology(5, seed=0))
