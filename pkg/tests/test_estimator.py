import numpy as np
import pytest
from sklearn.base import clone

from mvmdp.estimator import MeanVarianceMdpSolver
from mvmdp.oracle import enumerate_global_optimum

from conftest import make_random_mdp


def test_get_set_params_roundtrip():
    est = MeanVarianceMdpSolver(beta=2.0, solver="pi-standard")
    params = est.get_params()
    assert params["beta"] == 2.0
    est2 = clone(est)
    assert est2.get_params() == params


def test_fit_sets_attributes():
    rng = np.random.default_rng(0)
    mdp = make_random_mdp(rng, n_max=5, a_max=2, max_policies=729)
    est = MeanVarianceMdpSolver(beta=1.0).fit(mdp)
    assert hasattr(est, "policy_")
    assert abs(est.xi_ - (est.eta_ - est.zeta_)) < 1e-12
    opt = enumerate_global_optimum(mdp, 1.0)
    assert est.xi_ <= opt.xi_star + 1e-9
    assert est.score() == est.xi_


def test_predict_maps_states_to_actions():
    rng = np.random.default_rng(1)
    mdp = make_random_mdp(rng)
    est = MeanVarianceMdpSolver().fit(mdp)
    acts = est.predict(np.arange(mdp.n_states))
    assert np.array_equal(acts, est.policy_.actions)
    with pytest.raises(ValueError):
        est.predict([mdp.n_states])


def test_predict_before_fit_raises():
    with pytest.raises(RuntimeError):
        MeanVarianceMdpSolver().predict([0])


def test_fit_rejects_bad_inputs():
    rng = np.random.default_rng(2)
    mdp = make_random_mdp(rng)
    with pytest.raises(TypeError):
        MeanVarianceMdpSolver().fit([[1, 2], [3, 4]])
    with pytest.raises(ValueError):
        MeanVarianceMdpSolver(beta=-1.0).fit(mdp)
    with pytest.raises(ValueError):
        MeanVarianceMdpSolver(solver="gradient").fit(mdp)
