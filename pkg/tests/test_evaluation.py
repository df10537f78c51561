import numpy as np

from mvmdp.evaluation import (discounted_mean, discounted_variance, eval_mean,
                              eval_second_moment, local_optimality_residual,
                              mean_derivative, mean_variance_bundle,
                              mixed_policy_xi, performance_derivative,
                              performance_difference, pseudo_bundle,
                              pseudo_reward)
from mvmdp.mdp import MixedPolicy, Policy, induce

from conftest import make_random_mdp, random_policy


def test_eval_mean_solves_fixed_point():
    rng = np.random.default_rng(0)
    for _ in range(20):
        mdp = make_random_mdp(rng)
        mrp = induce(mdp, random_policy(rng, mdp))
        v = eval_mean(mrp, mdp.alpha)
        rhs = (1 - mdp.alpha) * mrp.reward_vector \
            + mdp.alpha * (mrp.transition_matrix @ v)
        assert np.max(np.abs(v - rhs)) < 1e-12


def test_fixed_point_method_agrees_with_direct():
    rng = np.random.default_rng(1)
    for _ in range(10):
        mdp = make_random_mdp(rng, alpha_range=(0.3, 0.9))
        mrp = induce(mdp, random_policy(rng, mdp))
        v_d = eval_mean(mrp, mdp.alpha, method="direct-solve")
        v_i = eval_mean(mrp, mdp.alpha, method="fixed-point")
        assert np.max(np.abs(v_d - v_i)) < 1e-9


def test_second_moment_dominates_squared_mean():
    rng = np.random.default_rng(2)
    for _ in range(20):
        mdp = make_random_mdp(rng)
        d = random_policy(rng, mdp)
        b = mean_variance_bundle(mdp, d, beta=1.0)
        assert b.zeta >= -1e-12


def test_bundle_consistency():
    rng = np.random.default_rng(3)
    for _ in range(30):
        mdp = make_random_mdp(rng)
        beta = float(rng.uniform(0, 5))
        d = random_policy(rng, mdp)
        b = mean_variance_bundle(mdp, d, beta)
        assert abs(b.xi - (b.eta - beta * b.zeta)) < 1e-12
        # u = v - beta (w - 2 eta v + eta^2 e)
        u = b.v - beta * (b.w - 2 * b.eta * b.v + b.eta ** 2)
        assert np.max(np.abs(u - b.u)) < 1e-12
        assert abs(float(mdp.mu @ b.u) - b.xi) < 1e-12


def test_variance_formula_equivalence():
    mu = np.array([0.3, 0.7])
    w = np.array([2.0, 1.0])
    v = np.array([0.5, 1.5])
    eta = discounted_mean(mu, v)
    # mu.w - 2 eta mu.v + eta^2 collapses to mu.w - eta^2
    assert abs(discounted_variance(mu, w, v, eta)
               - (float(mu @ w) - eta ** 2)) < 1e-14


def test_pseudo_mean_deviation_identity():
    # xi_lambda = xi - beta (eta - lambda)^2 for any lambda
    rng = np.random.default_rng(4)
    for _ in range(50):
        mdp = make_random_mdp(rng)
        beta = float(rng.uniform(0, 5))
        lam = float(rng.normal())
        d = random_policy(rng, mdp)
        b = mean_variance_bundle(mdp, d, beta)
        pb = pseudo_bundle(mdp, d, lam, beta)
        assert abs(pb.xi_lambda - (b.xi - beta * (b.eta - lam) ** 2)) < 1e-10


def test_pseudo_reward_shape():
    r = np.array([1.0, -2.0])
    f = pseudo_reward(r, lam=0.5, beta=2.0)
    assert np.allclose(f, r - 2.0 * (r - 0.5) ** 2)


def test_performance_difference_matches_direct():
    rng = np.random.default_rng(5)
    for _ in range(50):
        mdp = make_random_mdp(rng)
        beta = float(rng.uniform(0, 5))
        lam = float(rng.normal())
        d, dp = random_policy(rng, mdp), random_policy(rng, mdp)
        predicted = performance_difference(mdp, d, dp, lam, beta)
        direct = (mean_variance_bundle(mdp, dp, beta).xi
                  - mean_variance_bundle(mdp, d, beta).xi)
        assert abs(predicted - direct) < 1e-9


def test_performance_difference_zero_for_same_policy():
    rng = np.random.default_rng(6)
    mdp = make_random_mdp(rng)
    d = random_policy(rng, mdp)
    assert performance_difference(mdp, d, d, 0.3, 2.0) == 0.0


def test_mean_derivative_matches_finite_difference():
    rng = np.random.default_rng(7)
    for _ in range(20):
        mdp = make_random_mdp(rng, alpha_range=(0.3, 0.95))
        d, dp = random_policy(rng, mdp), random_policy(rng, mdp)
        der = mean_derivative(mdp, d, dp)
        h = 1e-6
        eta_h = mixed_policy_xi(mdp, MixedPolicy(d, dp, h), beta=0.0)[0]
        eta_0 = mean_variance_bundle(mdp, d, 0.0).eta
        assert abs(der - (eta_h - eta_0) / h) < 1e-4


def test_performance_derivative_matches_finite_difference():
    rng = np.random.default_rng(8)
    for _ in range(30):
        mdp = make_random_mdp(rng, alpha_range=(0.3, 0.95))
        beta = float(rng.uniform(0, 5))
        lam = float(rng.normal())
        d, dp = random_policy(rng, mdp), random_policy(rng, mdp)
        der = performance_derivative(mdp, d, dp, lam, beta)
        h = 1e-5
        xi_0 = mean_variance_bundle(mdp, d, beta).xi
        xi_h = mixed_policy_xi(mdp, MixedPolicy(d, dp, h), beta)[2]
        xi_2h = mixed_policy_xi(mdp, MixedPolicy(d, dp, 2 * h), beta)[2]
        fd = (4.0 * xi_h - 3.0 * xi_0 - xi_2h) / (2.0 * h)
        assert abs(der - fd) < 1e-4


def test_mixed_policy_endpoints():
    rng = np.random.default_rng(9)
    for _ in range(15):
        mdp = make_random_mdp(rng)
        beta = float(rng.uniform(0, 3))
        d, dp = random_policy(rng, mdp), random_policy(rng, mdp)
        b0 = mean_variance_bundle(mdp, d, beta)
        b1 = mean_variance_bundle(mdp, dp, beta)
        e0, z0, x0 = mixed_policy_xi(mdp, MixedPolicy(d, dp, 0.0), beta)
        e1, z1, x1 = mixed_policy_xi(mdp, MixedPolicy(d, dp, 1.0), beta)
        assert abs(e0 - b0.eta) < 1e-10 and abs(x0 - b0.xi) < 1e-10
        assert abs(e1 - b1.eta) < 1e-10 and abs(x1 - b1.xi) < 1e-10
        assert abs(z0 - b0.zeta) < 1e-10 and abs(z1 - b1.zeta) < 1e-10


def test_local_residual_nonnegative():
    rng = np.random.default_rng(10)
    for _ in range(30):
        mdp = make_random_mdp(rng)
        d = random_policy(rng, mdp)
        res = local_optimality_residual(mdp, d, float(rng.uniform(0, 5)))
        assert res >= -1e-10
