"""Policy evaluation for the discounted mean-variance criterion.

All value functions are normalized by (1 - alpha), so they stay on the scale
of the reward no matter how close the discount gets to 1. The module also
provides the verification identities used throughout the test suite: the
pseudo-mean deviation identity, the performance difference formula, the
mixed-policy derivative formula, and the local-optimality residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import MarkovRewardProcess, Mdp, MixedPolicy, Policy, induce, induce_mixed

DEFAULT_FP_TOL = 1e-10
DEFAULT_FP_MAX_ITER = 10**6
DIRECT_SOLVE_LIMIT = 2000


class EvaluationError(Exception):
    pass


@dataclass(frozen=True)
class ValueBundle:
    """All value functions and scalar performances of one policy.

    v is the mean value function, w the second-moment value function, u the
    mean-variance value function; eta = mu·v, zeta the variance, xi = eta - beta*zeta.
    """

    v: np.ndarray
    w: np.ndarray
    u: np.ndarray
    eta: float
    zeta: float
    xi: float
    beta: float
    alpha: float


@dataclass(frozen=True)
class PseudoBundle:
    """Pseudo-mean evaluation: reward r - beta (r - lambda)^2 under a fixed lambda."""

    lam: float
    f_lambda: np.ndarray
    u_lambda: np.ndarray
    xi_lambda: float


def _resolvent_apply(P: np.ndarray, alpha: float, rhs: np.ndarray) -> np.ndarray:
    """Solve (I - alpha P) x = rhs."""
    n = P.shape[0]
    return np.linalg.solve(np.eye(n) - alpha * P, rhs)


def _normalized_value(P, r, alpha, method="direct-solve", tol=DEFAULT_FP_TOL,
                      max_iter=DEFAULT_FP_MAX_ITER):
    """v = (1 - alpha)(I - alpha P)^{-1} r by direct solve or fixed-point iteration."""
    if method == "direct-solve":
        return _resolvent_apply(P, alpha, (1.0 - alpha) * r)
    if method == "fixed-point":
        v = np.zeros_like(r)
        base = (1.0 - alpha) * r
        for _ in range(max_iter):
            nxt = base + alpha * (P @ v)
            if np.max(np.abs(nxt - v)) <= tol:
                return nxt
            v = nxt
        raise EvaluationError(f"fixed-point evaluation did not reach tol={tol} "
                              f"within {max_iter} iterations")
    raise ValueError(f"unknown evaluation method {method!r}")


def eval_mean(mrp: MarkovRewardProcess, alpha: float, method="direct-solve",
              tol=DEFAULT_FP_TOL) -> np.ndarray:
    """Normalized discounted mean value function v of a Markov reward process."""
    return _normalized_value(mrp.transition_matrix, mrp.reward_vector, alpha,
                             method=method, tol=tol)


def eval_second_moment(mrp: MarkovRewardProcess, alpha: float, method="direct-solve",
                       tol=DEFAULT_FP_TOL) -> np.ndarray:
    """Normalized discounted second-moment value function w (reward squared element-wise)."""
    return _normalized_value(mrp.transition_matrix, mrp.reward_vector ** 2, alpha,
                             method=method, tol=tol)


def discounted_mean(mu: np.ndarray, v: np.ndarray) -> float:
    """eta = mu · v."""
    mu = np.asarray(mu, dtype=float)
    v = np.asarray(v, dtype=float)
    if mu.shape != v.shape:
        raise EvaluationError(f"dimension mismatch: mu {mu.shape} vs v {v.shape}")
    return float(mu @ v)


def discounted_variance(mu, w, v, eta: float) -> float:
    """zeta = mu·(w - 2 eta v + eta^2 e) = mu·w - eta^2 when eta = mu·v."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != np.shape(w) or mu.shape != np.shape(v):
        raise EvaluationError("dimension mismatch in discounted_variance")
    return float(mu @ w - 2.0 * eta * (mu @ v) + eta ** 2)


def mean_variance_bundle(mdp: Mdp, policy: Policy, beta: float,
                         method="direct-solve") -> ValueBundle:
    """Mutually consistent (v, w, u, eta, zeta, xi) for one policy.

    beta = 0 is accepted as the risk-neutral degenerate case (u = v, xi = eta).
    """
    mrp = induce(mdp, policy)
    return bundle_from_mrp(mrp, mdp.mu, mdp.alpha, beta, method=method)


def bundle_from_mrp(mrp: MarkovRewardProcess, mu, alpha: float, beta: float,
                    method="direct-solve") -> ValueBundle:
    v = eval_mean(mrp, alpha, method=method)
    w = eval_second_moment(mrp, alpha, method=method)
    eta = discounted_mean(mu, v)
    zeta = discounted_variance(mu, w, v, eta)
    u = v - beta * (w - 2.0 * eta * v + eta ** 2)
    xi = eta - beta * zeta
    return ValueBundle(v=v, w=w, u=u, eta=eta, zeta=zeta, xi=xi,
                       beta=beta, alpha=alpha)


def pseudo_reward(r: np.ndarray, lam: float, beta: float) -> np.ndarray:
    """f_lambda = r - beta (r - lambda)^2, element-wise."""
    r = np.asarray(r, dtype=float)
    return r - beta * (r - lam) ** 2


def pseudo_bundle(mdp: Mdp, policy: Policy, lam: float, beta: float) -> PseudoBundle:
    """Evaluate the standard MDP obtained by fixing the pseudo mean lambda."""
    mrp = induce(mdp, policy)
    f = pseudo_reward(mrp.reward_vector, lam, beta)
    u_lam = _normalized_value(mrp.transition_matrix, f, mdp.alpha)
    return PseudoBundle(lam=lam, f_lambda=f, u_lambda=u_lam,
                        xi_lambda=discounted_mean(mdp.mu, u_lam))


def performance_difference(mdp: Mdp, d: Policy, d_prime: Policy,
                           lam: float, beta: float) -> float:
    """Predicted xi' - xi between two policies, without evaluating d' from scratch.

    mu (I - alpha P')^{-1} [(1-alpha)(f'_lam - f_lam) + alpha (P' - P) u_lam]
    + beta (eta' - lam)^2 - beta (eta - lam)^2.
    """
    alpha = mdp.alpha
    base = induce(mdp, d)
    alt = induce(mdp, d_prime)
    f = pseudo_reward(base.reward_vector, lam, beta)
    f_p = pseudo_reward(alt.reward_vector, lam, beta)
    u_lam = _normalized_value(base.transition_matrix, f, alpha)
    eta = discounted_mean(mdp.mu, eval_mean(base, alpha))
    eta_p = discounted_mean(mdp.mu, eval_mean(alt, alpha))
    rhs = (1.0 - alpha) * (f_p - f) + alpha * ((alt.transition_matrix
                                                - base.transition_matrix) @ u_lam)
    front = float(mdp.mu @ _resolvent_apply(alt.transition_matrix, alpha, rhs))
    return front + beta * (eta_p - lam) ** 2 - beta * (eta - lam) ** 2


def mean_derivative(mdp: Mdp, d: Policy, d_prime: Policy) -> float:
    """d eta / d delta at delta = 0 along the mixing direction d -> d'.

    Risk-neutral specialization of the difference formula:
    mu (I - alpha P)^{-1} [(1-alpha)(r' - r) + alpha (P' - P) v].
    """
    alpha = mdp.alpha
    base = induce(mdp, d)
    alt = induce(mdp, d_prime)
    v = eval_mean(base, alpha)
    rhs = (1.0 - alpha) * (alt.reward_vector - base.reward_vector) \
        + alpha * ((alt.transition_matrix - base.transition_matrix) @ v)
    return float(mdp.mu @ _resolvent_apply(base.transition_matrix, alpha, rhs))


def performance_derivative(mdp: Mdp, d: Policy, d_prime: Policy,
                           lam: float, beta: float,
                           d_eta_d_delta: float = None) -> float:
    """d xi / d delta at delta = 0 in the mixed policy space.

    mu (I - alpha P)^{-1} [(1-alpha)(f'_lam - f_lam) + alpha (P' - P) u_lam]
    + 2 beta (eta - lam) * d eta / d delta. When lam equals eta of d the last
    term vanishes; d eta / d delta is computed in closed form unless supplied.
    """
    alpha = mdp.alpha
    base = induce(mdp, d)
    alt = induce(mdp, d_prime)
    f = pseudo_reward(base.reward_vector, lam, beta)
    f_p = pseudo_reward(alt.reward_vector, lam, beta)
    u_lam = _normalized_value(base.transition_matrix, f, alpha)
    rhs = (1.0 - alpha) * (f_p - f) + alpha * ((alt.transition_matrix
                                                - base.transition_matrix) @ u_lam)
    front = float(mdp.mu @ _resolvent_apply(base.transition_matrix, alpha, rhs))
    eta = discounted_mean(mdp.mu, eval_mean(base, alpha))
    if abs(eta - lam) < 1e-15:
        return front
    if d_eta_d_delta is None:
        d_eta_d_delta = mean_derivative(mdp, d, d_prime)
    return front + 2.0 * beta * (eta - lam) * d_eta_d_delta


def mixed_policy_xi(mdp: Mdp, mix: MixedPolicy, beta: float):
    """(eta, zeta, xi) of a randomized blend of two deterministic policies.

    The per-state expected pseudo reward of the blend is the blend of the two
    pseudo rewards, so the deviation identity carries over with blended terms.
    """
    alpha = mdp.alpha
    mixed = induce_mixed(mdp, mix)
    eta = discounted_mean(mdp.mu, eval_mean(mixed, alpha))
    base = induce(mdp, mix.base)
    alt = induce(mdp, mix.alternative)
    f_base = pseudo_reward(base.reward_vector, eta, beta)
    f_alt = pseudo_reward(alt.reward_vector, eta, beta)
    f_mix = (1.0 - mix.weight) * f_base + mix.weight * f_alt
    u = _normalized_value(mixed.transition_matrix, f_mix, alpha)
    xi = discounted_mean(mdp.mu, u)
    zeta = (eta - xi) / beta if beta > 0 else _mixed_zeta(mdp, mix, eta)
    return eta, zeta, xi


def _mixed_zeta(mdp: Mdp, mix: MixedPolicy, eta: float) -> float:
    mixed = induce_mixed(mdp, mix)
    base = induce(mdp, mix.base)
    alt = induce(mdp, mix.alternative)
    r2 = (1.0 - mix.weight) * base.reward_vector ** 2 \
        + mix.weight * alt.reward_vector ** 2
    w = _normalized_value(mixed.transition_matrix, r2, mdp.alpha)
    v = eval_mean(mixed, mdp.alpha)
    return discounted_variance(mdp.mu, w, v, eta)


def local_optimality_residuals(mdp: Mdp, policy: Policy, beta: float) -> np.ndarray:
    """Per-state violation of the local-optimality fixed-point condition.

    residual(x) = max_a {(1-alpha)[r(x,a) - beta (r(x,a) - eta)^2]
                         + alpha sum_y p(y|x,a) u(y)} - u(x),
    with eta and u taken from the exact evaluation of the policy itself.
    """
    bundle = mean_variance_bundle(mdp, policy, beta)
    alpha = mdp.alpha
    res = np.empty(mdp.n_states)
    for x in range(mdp.n_states):
        f = pseudo_reward(mdp.rewards[x], bundle.eta, beta)
        q = (1.0 - alpha) * f + alpha * (mdp.transitions[x] @ bundle.u)
        res[x] = np.max(q) - bundle.u[x]
    return res


def local_optimality_residual(mdp: Mdp, policy: Policy, beta: float) -> float:
    """Maximum per-state local-optimality violation; ~0 at a local optimum."""
    return float(np.max(local_optimality_residuals(mdp, policy, beta)))
