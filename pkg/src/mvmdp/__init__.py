"""Risk-averse discounted mean-variance optimization in finite MDPs."""

__version__ = "0.1.0"

from .estimator import MeanVarianceMdpSolver
from .evaluation import (PseudoBundle, ValueBundle, local_optimality_residual,
                         mean_variance_bundle, mixed_policy_xi,
                         performance_derivative, performance_difference,
                         pseudo_bundle, pseudo_reward)
from .frontier import (FrontierPoint, beta_sweep, convex_efficient_frontier,
                       oracle_frontier)
from .mdp import (Mdp, MdpError, MdpValidationError, MixedPolicy, Policy,
                  load_mdp, save_mdp, validate_mdp)
from .oracle import (certify_local_optimum, enumerate_global_optimum,
                     global_optimum_via_polygon, monte_carlo_estimate)
from .portfolio import (PortfolioParams, build_portfolio_mdp,
                        canonical_portfolio, laddered_policy)
from .solvers import (SolveResult, SolverConfig, bilevel_solve, dmvvi,
                      iteration_lower_bound)

__all__ = [
    "MeanVarianceMdpSolver",
    "PseudoBundle", "ValueBundle", "local_optimality_residual",
    "mean_variance_bundle", "mixed_policy_xi", "performance_derivative",
    "performance_difference", "pseudo_bundle", "pseudo_reward",
    "FrontierPoint", "beta_sweep", "convex_efficient_frontier",
    "oracle_frontier",
    "Mdp", "MdpError", "MdpValidationError", "MixedPolicy", "Policy",
    "load_mdp", "save_mdp", "validate_mdp",
    "certify_local_optimum", "enumerate_global_optimum",
    "global_optimum_via_polygon", "monte_carlo_estimate",
    "PortfolioParams", "build_portfolio_mdp", "canonical_portfolio",
    "laddered_policy",
    "SolveResult", "SolverConfig", "bilevel_solve", "dmvvi",
    "iteration_lower_bound",
]
