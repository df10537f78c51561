"""Scikit-learn style front end for the mean-variance MDP solver.

The estimator treats one MDP as the dataset: fit(mdp) runs the bilevel solver
and stores the resulting policy plus its exact performance, predict(states)
maps state indices to the fitted actions. Hyperparameters follow the usual
get_params / set_params protocol so grid search over beta or the inner solver
works out of the box.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .mdp import Mdp
from .solvers import INNER_VARIANTS, SolverConfig, bilevel_solve


class MeanVarianceMdpSolver(BaseEstimator):
    """Find a locally optimal policy for the discounted mean-variance criterion.

    Parameters
    ----------
    beta : float, risk-aversion weight in xi = eta - beta * zeta.
    solver : str, inner-loop variant, one of INNER_VARIANTS.
    theta : float, convergence threshold for both loops.
    lambda0 : float or None, initial pseudo mean (None: mean reward of the
        lowest-index policy).
    max_outer, max_inner : iteration caps.
    certify : bool, run the exact greedy polish after convergence.
    """

    def __init__(self, beta=1.0, solver="dmvvi", theta=1e-5, lambda0=None,
                 max_outer=500, max_inner=10**6, certify=True):
        self.beta = beta
        self.solver = solver
        self.theta = theta
        self.lambda0 = lambda0
        self.max_outer = max_outer
        self.max_inner = max_inner
        self.certify = certify

    def fit(self, X, y=None):
        """Solve the MDP in X. y is ignored, present for API compatibility."""
        if not isinstance(X, Mdp):
            raise TypeError("X must be an Mdp instance")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.solver not in INNER_VARIANTS:
            raise ValueError(f"solver must be one of {INNER_VARIANTS}")
        config = SolverConfig(theta=self.theta, lambda_init=self.lambda0,
                              inner=self.solver, max_outer=self.max_outer,
                              max_inner=self.max_inner, certify=self.certify)
        result = bilevel_solve(X, self.beta, config)
        self.result_ = result
        self.policy_ = result.policy
        self.eta_ = result.bundle.eta
        self.zeta_ = result.bundle.zeta
        self.xi_ = result.bundle.xi
        self.n_states_ = X.n_states
        return self

    def predict(self, X):
        """Actions of the fitted policy at the given state indices."""
        if not hasattr(self, "policy_"):
            raise RuntimeError("call fit before predict")
        states = np.asarray(X, dtype=int).ravel()
        if states.size and (states.min() < 0 or states.max() >= self.n_states_):
            raise ValueError("state index out of range")
        return self.policy_.actions[states]

    def score(self, X=None, y=None):
        """The fitted mean-variance performance xi (higher is better)."""
        if not hasattr(self, "xi_"):
            raise RuntimeError("call fit before score")
        return self.xi_
