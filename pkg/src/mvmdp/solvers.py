"""Bilevel solvers for the discounted mean-variance objective.

The outer problem is a one-dimensional search over the pseudo mean; the inner
problem is a standard discounted MDP whose reward is the pseudo reward under
the current pseudo mean. Four inner solvers are provided (standard and
optimistic policy iteration, standard and optimistic value iteration) plus the
fully interleaved mean-variance value iteration that maintains mean and
second-moment value functions and composes the pseudo value on the fly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .evaluation import (ValueBundle, local_optimality_residual,
                         mean_variance_bundle, pseudo_reward)
from .mdp import Mdp, Policy, induce

INNER_VARIANTS = ("pi-standard", "pi-optimistic", "vi-standard",
                  "vi-optimistic", "dmvvi")

_POLISH_CAP = 200
_VALUE_STALL_TOL = 1e-13


class SolverError(Exception):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for `bilevel_solve`.

    theta is both the inner convergence threshold and the outer pseudo-mean
    stationarity tolerance. lambda_init of None means: expected one-step
    reward of the lowest-index policy (deterministic default basin).
    """

    theta: float = 1e-5
    lambda_init: float = None
    inner: str = "dmvvi"
    max_outer: int = 500
    max_inner: int = 10**6
    tie_break: str = "lowest"
    exact_lambda: bool = False
    certify: bool = True

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be at least 1")
        if self.inner not in INNER_VARIANTS:
            raise ValueError(f"unknown inner solver {self.inner!r}; "
                             f"expected one of {INNER_VARIANTS}")


@dataclass(frozen=True)
class OuterRecord:
    """One outer iteration of a solve, as exported to trace CSV."""

    outer: int
    lam: float
    xi: float
    eta: float
    zeta: float
    inner_iters: int
    residual: float


@dataclass(frozen=True)
class SolveResult:
    policy: Policy
    bundle: ValueBundle
    lambda_trace: tuple
    xi_trace: tuple
    inner_iterations: tuple
    trace: tuple  # OuterRecord per outer iteration
    sweep_diffs: tuple  # successive sup-norm value-iteration diffs, per outer step
    local_residual: float
    converged: bool


def _q_values(mdp: Mdp, x: int, u: np.ndarray, lam: float, beta: float) -> np.ndarray:
    f = pseudo_reward(mdp.rewards[x], lam, beta)
    return (1.0 - mdp.alpha) * f + mdp.alpha * (mdp.transitions[x] @ u)


def greedy_policy(mdp: Mdp, u_lambda: np.ndarray, lam: float, beta: float,
                  tie_break: str = "lowest") -> Policy:
    """Greedy improvement against a pseudo mean-variance value function.

    Ties resolve to the lowest action index so traces are reproducible.
    """
    if tie_break != "lowest":
        raise ValueError(f"unknown tie-break rule {tie_break!r}")
    actions = np.empty(mdp.n_states, dtype=int)
    for x in range(mdp.n_states):
        actions[x] = int(np.argmax(_q_values(mdp, x, u_lambda, lam, beta)))
    return Policy(actions)


def _pseudo_value(mdp: Mdp, policy: Policy, lam: float, beta: float) -> np.ndarray:
    mrp = induce(mdp, policy)
    f = pseudo_reward(mrp.reward_vector, lam, beta)
    n = mdp.n_states
    return np.linalg.solve(np.eye(n) - mdp.alpha * mrp.transition_matrix,
                           (1.0 - mdp.alpha) * f)


def _exact_eta(mdp: Mdp, policy: Policy) -> float:
    mrp = induce(mdp, policy)
    n = mdp.n_states
    v = np.linalg.solve(np.eye(n) - mdp.alpha * mrp.transition_matrix,
                        (1.0 - mdp.alpha) * mrp.reward_vector)
    return float(mdp.mu @ v)


def inner_policy_iteration(mdp: Mdp, lam: float, beta: float,
                           variant: str = "standard",
                           warm_start: Policy = None,
                           max_inner: int = 10**6):
    """Policy iteration on the fixed-lambda standard MDP.

    Standard variant iterates to a greedy fixed point before updating the
    pseudo mean; the optimistic variant does one evaluate-improve step.
    Returns (policy, lambda_next, iterations).
    """
    if warm_start is None:
        warm_start = Policy(np.zeros(mdp.n_states, dtype=int))
    d = warm_start
    if variant == "optimistic":
        u = _pseudo_value(mdp, d, lam, beta)
        d = greedy_policy(mdp, u, lam, beta)
        return d, _exact_eta(mdp, d), 1
    if variant != "standard":
        raise ValueError(f"unknown policy-iteration variant {variant!r}")
    prev_u = None
    for it in range(1, max_inner + 1):
        u = _pseudo_value(mdp, d, lam, beta)
        if prev_u is not None and np.max(np.abs(u - prev_u)) <= _VALUE_STALL_TOL:
            break  # tie between equal-value policies; any of them is optimal
        prev_u = u
        d_new = greedy_policy(mdp, u, lam, beta)
        if d_new == d:
            break
        d = d_new
    else:
        raise SolverError(f"inner policy iteration exceeded {max_inner} iterations")
    return d, _exact_eta(mdp, d), it


def inner_value_iteration(mdp: Mdp, lam: float, beta: float,
                          variant: str = "standard",
                          warm_values=None, theta: float = 1e-5,
                          max_inner: int = 10**6):
    """Greedy value iteration on the fixed-lambda MDP with a companion mean value.

    The companion v is advanced with the same greedy policy each sweep and
    supplies the pseudo-mean update mu·v on exit. Returns
    (policy, lambda_next, (v, u_lambda), iterations, sweep_diffs).
    """
    n = mdp.n_states
    if warm_values is None:
        v, u = np.zeros(n), np.zeros(n)
    else:
        v, u = (np.array(warm_values[0], dtype=float),
                np.array(warm_values[1], dtype=float))
    diffs = []
    n_sweeps = 1 if variant == "optimistic" else max_inner
    if variant not in ("standard", "optimistic"):
        raise ValueError(f"unknown value-iteration variant {variant!r}")
    d = None
    for it in range(1, n_sweeps + 1):
        d = greedy_policy(mdp, u, lam, beta)
        mrp = induce(mdp, d)
        f = pseudo_reward(mrp.reward_vector, lam, beta)
        u_new = (1.0 - mdp.alpha) * f + mdp.alpha * (mrp.transition_matrix @ u)
        v = (1.0 - mdp.alpha) * mrp.reward_vector \
            + mdp.alpha * (mrp.transition_matrix @ v)
        diffs.append(float(np.max(np.abs(u_new - u))))
        u = u_new
        if variant == "standard" and diffs[-1] <= theta:
            break
    else:
        if variant == "standard":
            raise SolverError(f"inner value iteration exceeded {max_inner} sweeps")
    lam_next = float(mdp.mu @ v)
    return d, lam_next, (v, u), it, diffs


@dataclass
class _DmvviState:
    v: np.ndarray
    w: np.ndarray
    v_next: np.ndarray
    w_next: np.ndarray
    u: np.ndarray
    policy: Policy = None
    fresh: bool = True  # force at least one sweep on the very first inner pass


def _compose_u(v, w, lam, beta):
    return v - beta * (w - 2.0 * lam * v + lam ** 2)


def _dmvvi_inner(mdp: Mdp, state: _DmvviState, lam: float, beta: float,
                 theta: float, max_inner: int):
    """One inner pass of the mean-variance value iteration at a fixed lambda."""
    diffs = []
    it = 0
    while it < max_inner:
        composed = _compose_u(state.v_next, state.w_next, lam, beta)
        u_gap = float(np.max(np.abs(state.u - composed)))
        v_gap = float(np.max(np.abs(state.v_next - state.v)))
        if not state.fresh and u_gap <= theta and v_gap <= theta:
            break
        state.fresh = False
        it += 1
        state.v = state.v_next
        state.w = state.w_next
        u_new = _compose_u(state.v, state.w, lam, beta)
        diffs.append(float(np.max(np.abs(u_new - state.u))))
        state.u = u_new
        state.policy = greedy_policy(mdp, state.u, lam, beta)
        mrp = induce(mdp, state.policy)
        state.v_next = (1.0 - mdp.alpha) * mrp.reward_vector \
            + mdp.alpha * (mrp.transition_matrix @ state.v)
        state.w_next = (1.0 - mdp.alpha) * mrp.reward_vector ** 2 \
            + mdp.alpha * (mrp.transition_matrix @ state.w)
    else:
        raise SolverError(f"mean-variance value iteration exceeded {max_inner} sweeps")
    lam_next = float(mdp.mu @ state.v_next)
    # diffs[0] mixes the lambda jump into the composed value; only subsequent
    # gaps measure the sweep contraction
    return state.policy, lam_next, it, diffs[1:]


def _default_lambda(mdp: Mdp) -> float:
    lowest = Policy(np.zeros(mdp.n_states, dtype=int))
    mrp = induce(mdp, lowest)
    return float(mdp.mu @ mrp.reward_vector)


def _polish(mdp: Mdp, policy: Policy, beta: float):
    """Exact greedy refinement at lambda = eta until the policy is a fixed point.

    Keeps the incumbent action unless a strictly better one exists, so exact
    ties cannot cycle; each change strictly increases xi, so this terminates.
    """
    steps = []
    for _ in range(_POLISH_CAP):
        bundle = mean_variance_bundle(mdp, policy, beta)
        actions = np.array(policy.actions)
        changed = False
        for x in range(mdp.n_states):
            q = _q_values(mdp, x, bundle.u, bundle.eta, beta)
            best = int(np.argmax(q))
            if q[best] > q[actions[x]] + 1e-12:
                actions[x] = best
                changed = True
        if not changed:
            return policy, bundle, steps
        policy = Policy(actions)
        steps.append(policy)
    raise SolverError("local refinement failed to reach a greedy fixed point")


def bilevel_solve(mdp: Mdp, beta: float, config: SolverConfig = None) -> SolveResult:
    """Run the bilevel pseudo-mean framework with the configured inner solver.

    The outer loop fixes the pseudo mean, (partly) solves the resulting
    standard MDP, and updates the pseudo mean from the improved policy's
    discounted mean; it stops when the pseudo mean is stationary within theta.
    """
    if config is None:
        config = SolverConfig()
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    theta = config.theta
    lam_next = (config.lambda_init if config.lambda_init is not None
                else _default_lambda(mdp))
    n = mdp.n_states
    vi_state = (np.zeros(n), np.zeros(n))
    dm_state = _DmvviState(v=np.zeros(n), w=np.zeros(n), v_next=np.zeros(n),
                           w_next=np.zeros(n), u=np.zeros(n))
    policy = Policy(np.zeros(n, dtype=int))
    records, lambda_trace, xi_trace, inner_iters, sweep_diffs = [], [], [], [], []
    converged = False
    # The one-sweep value-iteration variant carries no per-step improvement
    # guarantee of its own, so the solver retains the best exact-xi policy
    # seen; the trace and the returned policy refer to the retained one.
    retain = config.inner == "vi-optimistic"
    best = None
    for outer in range(1, config.max_outer + 1):
        lam = lam_next
        diffs = []
        if config.inner == "pi-standard":
            policy, lam_next, it = inner_policy_iteration(
                mdp, lam, beta, "standard", warm_start=policy,
                max_inner=config.max_inner)
        elif config.inner == "pi-optimistic":
            policy, lam_next, it = inner_policy_iteration(
                mdp, lam, beta, "optimistic", warm_start=policy)
        elif config.inner in ("vi-standard", "vi-optimistic"):
            variant = config.inner.split("-")[1]
            policy, lam_next, vi_state, it, diffs = inner_value_iteration(
                mdp, lam, beta, variant, warm_values=vi_state,
                theta=theta, max_inner=config.max_inner)
        else:
            policy, lam_next, it, diffs = _dmvvi_inner(
                mdp, dm_state, lam, beta, theta, config.max_inner)
        if config.exact_lambda:
            lam_next = _exact_eta(mdp, policy)
        bundle = mean_variance_bundle(mdp, policy, beta)
        if retain:
            if best is None or bundle.xi > best[1].xi:
                best = (policy, bundle)
            bundle = best[1]
        lambda_trace.append(lam)
        xi_trace.append(bundle.xi)
        inner_iters.append(it)
        sweep_diffs.append(tuple(diffs))
        records.append(OuterRecord(outer=outer, lam=lam, xi=bundle.xi,
                                   eta=bundle.eta, zeta=bundle.zeta,
                                   inner_iters=it,
                                   residual=diffs[-1] if diffs else 0.0))
        if abs(lam_next - lam) <= theta:
            converged = True
            break
    if retain and best is not None:
        policy, bundle = best
    else:
        bundle = mean_variance_bundle(mdp, policy, beta)
    if converged and config.certify:
        policy, bundle, steps = _polish(mdp, policy, beta)
        for extra in steps:
            b = mean_variance_bundle(mdp, extra, beta)
            lambda_trace.append(b.eta)
            xi_trace.append(b.xi)
            inner_iters.append(1)
            sweep_diffs.append(())
            records.append(OuterRecord(outer=len(records) + 1, lam=b.eta, xi=b.xi,
                                       eta=b.eta, zeta=b.zeta, inner_iters=1,
                                       residual=0.0))
    return SolveResult(
        policy=policy, bundle=bundle,
        lambda_trace=tuple(lambda_trace), xi_trace=tuple(xi_trace),
        inner_iterations=tuple(inner_iters), trace=tuple(records),
        sweep_diffs=tuple(sweep_diffs),
        local_residual=local_optimality_residual(mdp, policy, beta),
        converged=converged)


def dmvvi(mdp: Mdp, beta: float, config: SolverConfig = None) -> SolveResult:
    """The discounted mean-variance value iteration (inner='dmvvi' shortcut)."""
    if config is None:
        config = SolverConfig(inner="dmvvi")
    elif config.inner != "dmvvi":
        config = replace(config, inner="dmvvi")
    return bilevel_solve(mdp, beta, config)


def iteration_lower_bound(mdp: Mdp, lam: float, beta: float, epsilon: float,
                          initial_u: np.ndarray) -> int:
    """Iterations needed for epsilon-accuracy of the fixed-lambda value iteration.

    n = ceil(log_alpha(eps (1-alpha) / (2 ||B u1 - u1||_inf))) + 1, with B the
    greedy Bellman update; degenerates to 1 when u1 is already a fixed point.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    u = np.asarray(initial_u, dtype=float)
    bu = np.empty_like(u)
    for x in range(mdp.n_states):
        bu[x] = np.max(_q_values(mdp, x, u, lam, beta))
    resid = float(np.max(np.abs(bu - u)))
    if resid == 0.0:
        return 1
    inner = epsilon * (1.0 - mdp.alpha) / (2.0 * resid)
    n = math.ceil(math.log(inner) / math.log(mdp.alpha)) + 1
    return max(int(n), 1)


def export_trace_csv(result: SolveResult, path) -> None:
    """Per-iteration trace with the fixed header outer,lambda,xi,eta,zeta,inner_iters,residual."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["outer", "lambda", "xi", "eta", "zeta",
                         "inner_iters", "residual"])
        for rec in result.trace:
            writer.writerow([rec.outer, f"{rec.lam:.10g}", f"{rec.xi:.10g}",
                             f"{rec.eta:.10g}", f"{rec.zeta:.10g}",
                             rec.inner_iters, f"{rec.residual:.10g}"])
