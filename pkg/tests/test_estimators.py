import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cascade_bp import JointPrior, SchemaError, Snapshot, build_network, make_model
from cascade_bp.estimators import SourceEstimator, SpreadEstimator
from cascade_bp.inference import infer


@pytest.fixture
def path():
    net = build_network([(0, 1), (1, 2), (2, 3)])
    prior = JointPrior(np.array([[1, 0, 0, 2], [0, 1, 0, 0], [2, 0, 1, 0]]), np.array([0.5, 0.3, 0.2]))
    return net, make_model(net, lam=0.7, prior=prior, noise=np.eye(4) * 0.9 + 0.025)


def test_params_roundtrip_and_clone(path):
    net, model = path
    est = SourceEstimator(network=net, model=model, eta=0.7, tol=1e-10)
    params = est.get_params()
    assert params["eta"] == 0.7 and params["algorithm"] == "full"
    twin = clone(est)
    assert twin.get_params()["tol"] == 1e-10
    assert not hasattr(twin, "marginals_")
    est.set_params(algorithm="scalable", t_max=2)
    assert est.algorithm == "scalable"


def test_fit_predict_matches_functional_api(path):
    net, model = path
    snap = Snapshot(np.array([1, 1, 0, 2]))
    est = SourceEstimator(network=net, model=model).fit(snap)
    marg, report, _, _ = infer(net, model, snap, "full")
    assert np.allclose(est.predict_proba(), marg.x0)
    assert est.predict().tolist() == marg.x_hat.tolist()
    assert est.converged_ and est.n_iter_ == report.iterations
    assert set(est.rank(0)) == set(net.labels)


def test_accepts_plain_inputs():
    est = SourceEstimator(network=[("a", "b"), ("b", "c")], algorithm="scalable", t_max=2)
    proba = est.predict_proba(["A", "S", "S"])
    assert proba.shape == (3, 4)
    assert np.allclose(proba.sum(axis=1), 1.0)
    assert est.rank(0)[0] == "a"


def test_unfitted_and_bad_inputs(path):
    net, model = path
    with pytest.raises(NotFittedError):
        SourceEstimator(network=net, model=model).predict()
    with pytest.raises(SchemaError):
        SourceEstimator(network=net, model=model).fit(["A", "S"])
    with pytest.raises(SchemaError):
        SourceEstimator(network=None).fit(["A"])


def test_spread_estimator():
    net = build_network([(0, 1), (1, 2)])
    est = SpreadEstimator(network=net, model=make_model(net, lam=0.5), horizon=1)
    spread = est.fit(["A", "S", "S"]).predict()
    assert spread == pytest.approx([1.5, 0.0])
    assert est.report_.converged
    assert clone(est).get_params()["horizon"] == 1
    with pytest.raises(ValueError):
        SpreadEstimator(network=net, horizon=5, t_max=2).fit([1, 0, 0])
