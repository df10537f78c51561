"""Independent ground-truth machinery for solver verification.

Three routes to the truth, none of which share code paths with the solvers:
exhaustive policy enumeration for small models, seeded Monte-Carlo simulation,
and an exact convex-support oracle that enumerates the achievable
(mean, second moment) polygon through risk-neutral solves only. The polygon
route makes global optima and frontiers computable on models whose policy
space is far beyond any enumeration cap.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .evaluation import mean_variance_bundle, pseudo_reward
from .mdp import Mdp, Policy, induce

ENUMERATION_CAP = 10**6
_XI_TIE_TOL = 1e-10


class EnumerationCapError(Exception):
    """Policy space exceeds the enumeration cap; no sampling fallback exists."""


@dataclass(frozen=True)
class GlobalOptimum:
    """Exact maximum of the mean-variance objective over all deterministic policies."""

    xi_star: float
    optimal_policies: tuple  # every maximizer within the tie tolerance
    optimal_etas: tuple

    def eta_star_nearest(self, eta: float) -> float:
        """Discounted mean of the maximizer whose mean is closest to `eta`."""
        return min(self.optimal_etas, key=lambda e: abs(e - eta))


def iter_policies(mdp: Mdp):
    ranges = [range(mdp.n_actions(x)) for x in range(mdp.n_states)]
    for combo in itertools.product(*ranges):
        yield Policy(np.array(combo, dtype=int))


def enumerate_policy_performances(mdp: Mdp, beta: float, cap: int = ENUMERATION_CAP):
    """Yield (policy, eta, zeta, xi) for every deterministic policy."""
    count = mdp.policy_count()
    if count > cap:
        raise EnumerationCapError(
            f"policy space has {count:.3g} policies, above the cap of {cap}")
    for policy in iter_policies(mdp):
        b = mean_variance_bundle(mdp, policy, beta)
        yield policy, b.eta, b.zeta, b.xi


def enumerate_global_optimum(mdp: Mdp, beta: float,
                             cap: int = ENUMERATION_CAP) -> GlobalOptimum:
    """Exhaustively maximize xi; returns the maximum and all argmax policies."""
    best_xi = -math.inf
    best = []
    for policy, eta, zeta, xi in enumerate_policy_performances(mdp, beta, cap=cap):
        if xi > best_xi + _XI_TIE_TOL:
            best_xi = xi
            best = [(policy, eta)]
        elif xi >= best_xi - _XI_TIE_TOL:
            best_xi = max(best_xi, xi)
            best.append((policy, eta))
    policies = tuple(p for p, _ in best)
    etas = tuple(e for _, e in best)
    return GlobalOptimum(xi_star=best_xi, optimal_policies=policies,
                         optimal_etas=etas)


def export_oracle_csv(mdp: Mdp, beta: float, path, cap: int = ENUMERATION_CAP) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "xi", "eta", "zeta"])
        for policy, eta, zeta, xi in enumerate_policy_performances(mdp, beta, cap=cap):
            writer.writerow([policy.encode(), f"{xi:.10g}", f"{eta:.10g}",
                             f"{zeta:.10g}"])


# ---------------------------------------------------------------------------
# Monte-Carlo estimation


@dataclass(frozen=True)
class MonteCarloEstimate:
    eta: float
    zeta: float
    xi: float
    eta_se: float
    zeta_se: float
    xi_se: float
    horizon: int
    trajectories: int
    seed: int


def default_horizon(mdp: Mdp, bias: float = 1e-8) -> int:
    """Truncation horizon keeping the discounted-tail bias on eta below `bias`."""
    r_max = max(mdp.max_reward_magnitude, 1e-12)
    t = math.log(bias * (1.0 - mdp.alpha) / r_max) / math.log(mdp.alpha)
    return max(int(math.ceil(t)), 1)


def monte_carlo_estimate(mdp: Mdp, policy: Policy, beta: float,
                         horizon: int = None, trajectories: int = 10**5,
                         seed: int = 0) -> MonteCarloEstimate:
    """Simulate discounted mean/variance under a policy; reproducible given seed.

    Per-trajectory discounted sums are accumulated with a vectorized sweep;
    all randomness comes from one Philox stream keyed by the seed, and each
    draw is indexed by (step, trajectory), so results do not depend on
    batching. The variance estimate plugs in the estimated mean.
    """
    if horizon is None:
        horizon = default_horizon(mdp)
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if trajectories < 2:
        raise ValueError("need at least 2 trajectories")
    mrp = induce(mdp, policy)
    P, r = mrp.transition_matrix, mrp.reward_vector
    n = mdp.n_states
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    mu_cum = np.cumsum(mdp.mu)
    mu_cum[-1] = 1.0
    rng = np.random.Generator(np.random.Philox(seed))
    states = np.searchsorted(mu_cum, rng.random(trajectories), side="right")
    g1 = np.zeros(trajectories)
    g2 = np.zeros(trajectories)
    disc = 1.0 - mdp.alpha
    for _ in range(horizon):
        rew = r[states]
        g1 += disc * rew
        g2 += disc * rew ** 2
        disc *= mdp.alpha
        draws = rng.random(trajectories)
        nxt = np.empty_like(states)
        for s in np.unique(states):
            mask = states == s
            nxt[mask] = np.searchsorted(cum[s], draws[mask], side="right")
        states = nxt
    eta_hat = float(g1.mean())
    z = g2 - 2.0 * eta_hat * g1 + eta_hat ** 2 * (1.0 - mdp.alpha ** horizon)
    zeta_hat = float(z.mean())
    x = g1 - beta * z
    xi_hat = float(x.mean())
    sqn = math.sqrt(trajectories)
    return MonteCarloEstimate(
        eta=eta_hat, zeta=zeta_hat, xi=xi_hat,
        eta_se=float(g1.std(ddof=1)) / sqn,
        zeta_se=float(z.std(ddof=1)) / sqn,
        xi_se=float(x.std(ddof=1)) / sqn,
        horizon=horizon, trajectories=trajectories, seed=seed)


# ---------------------------------------------------------------------------
# Local-optimality certification


@dataclass(frozen=True)
class LocalOptimalityCertificate:
    is_local: bool
    worst_direction: Policy
    worst_derivative: float


def certify_local_optimum(mdp: Mdp, policy: Policy, beta: float,
                          tol: float = 1e-8) -> LocalOptimalityCertificate:
    """Check the mixed-policy derivative toward every deterministic direction.

    The derivative toward d' decomposes into independent per-state terms
    m(x) * (q(x, a) - u(x)) with m = mu (I - alpha P_d)^{-1}, so the exact
    worst direction is assembled state by state; no enumeration is needed.
    """
    bundle = mean_variance_bundle(mdp, policy, beta)
    mrp = induce(mdp, policy)
    n = mdp.n_states
    m = np.linalg.solve(np.eye(n) - mdp.alpha * mrp.transition_matrix.T, mdp.mu)
    worst_actions = np.array(policy.actions)
    worst_total = 0.0
    for x in range(n):
        f = pseudo_reward(mdp.rewards[x], bundle.eta, beta)
        q = (1.0 - mdp.alpha) * f + mdp.alpha * (mdp.transitions[x] @ bundle.u)
        gains = m[x] * (q - bundle.u[x])
        a = int(np.argmax(gains))
        if gains[a] > 0.0:
            worst_actions[x] = a
            worst_total += float(gains[a])
    return LocalOptimalityCertificate(
        is_local=worst_total <= tol,
        worst_direction=Policy(worst_actions),
        worst_derivative=worst_total)


# ---------------------------------------------------------------------------
# Convex-support oracle over the achievable (mean, second moment) set


@dataclass(frozen=True)
class PolygonVertex:
    eta: float
    second_moment: float
    policy: Policy

    @property
    def point(self):
        return np.array([self.eta, self.second_moment])

    def zeta(self) -> float:
        return self.second_moment - self.eta ** 2

    def xi(self, beta: float) -> float:
        return self.eta - beta * self.zeta()


def solve_scalarized(mdp: Mdp, c_mean: float, c_second: float,
                     max_iter: int = 10**4):
    """Exactly maximize c_mean * eta + c_second * (mu·w) over all policies.

    This is a standard discounted MDP with reward c_mean r + c_second r^2,
    solved by policy iteration with exact evaluation. Returns the optimal
    policy and its (eta, second moment).
    """
    n = mdp.n_states
    alpha = mdp.alpha
    g = [c_mean * mdp.rewards[x] + c_second * mdp.rewards[x] ** 2
         for x in range(n)]
    actions = np.zeros(n, dtype=int)
    prev_v = None
    for _ in range(max_iter):
        P = np.stack([mdp.transitions[x][actions[x]] for x in range(n)])
        gv = np.array([g[x][actions[x]] for x in range(n)])
        v = np.linalg.solve(np.eye(n) - alpha * P, (1.0 - alpha) * gv)
        if prev_v is not None and np.max(np.abs(v - prev_v)) <= 1e-13:
            break
        prev_v = v
        new_actions = np.array([
            int(np.argmax((1.0 - alpha) * g[x] + alpha * (mdp.transitions[x] @ v)))
            for x in range(n)])
        if np.array_equal(new_actions, actions):
            break
        actions = new_actions
    else:
        raise RuntimeError("scalarized policy iteration did not converge")
    policy = Policy(actions)
    b = mean_variance_bundle(mdp, policy, beta=0.0)
    return policy, b.eta, float(mdp.mu @ b.w)


def achievable_polygon(mdp: Mdp, tol: float = 1e-9) -> list:
    """All vertices of the achievable (eta, mu·w) polygon, in support order.

    Recursively probes support directions: for each candidate edge the outward
    normal is solved; a support point beyond the edge splits it. Every probe
    is a globally solvable risk-neutral MDP, so the polygon is exact.
    """

    def support(direction):
        policy, eta, second = solve_scalarized(mdp, direction[0], direction[1])
        return PolygonVertex(eta=eta, second_moment=second, policy=policy)

    base_dirs = [np.array([1.0, 0.0]), np.array([0.0, 1.0]),
                 np.array([-1.0, 0.0]), np.array([0.0, -1.0])]
    chain = [(d, support(d)) for d in base_dirs]
    out = []
    for i in range(4):
        d1, p1 = chain[i]
        d2, p2 = chain[(i + 1) % 4]
        out.append(p1)
        out.extend(_refine_arc(support, d1, p1, d2, p2, tol, depth=0))
    # collinear probe points can slip in; keep strict hull vertices only
    return _hull_filter(out, tol)


def _refine_arc(support, d1, p1, d2, p2, tol, depth):
    if depth > 60:
        return []
    seg = p2.point - p1.point
    if np.max(np.abs(seg)) <= tol:
        return []
    normal = np.array([seg[1], -seg[0]])
    if normal @ (d1 + d2) < 0:
        normal = -normal
    norm = np.linalg.norm(normal)
    if norm == 0:
        return []
    normal /= norm
    p3 = support(normal)
    if normal @ p3.point <= max(normal @ p1.point, normal @ p2.point) + tol:
        return []
    return (_refine_arc(support, d1, p1, normal, p3, tol, depth + 1)
            + [p3]
            + _refine_arc(support, normal, p3, d2, p2, tol, depth + 1))


def _hull_filter(vertices, tol):
    pts = [v.point for v in vertices]
    keep = []
    seen = []
    for v, p in zip(vertices, pts):
        if any(np.max(np.abs(p - q)) <= tol for q in seen):
            continue
        seen.append(p)
        keep.append(v)
    if len(keep) <= 2:
        return keep
    arr = np.array([v.point for v in keep])
    center = arr.mean(axis=0)
    order = np.argsort(np.arctan2(arr[:, 1] - center[1], arr[:, 0] - center[0]))
    ordered = [keep[i] for i in order]
    result = []
    m = len(ordered)
    for i in range(m):
        a = ordered[(i - 1) % m].point
        b = ordered[i].point
        c = ordered[(i + 1) % m].point
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(cross) > 1e-12 or m <= 2:
            result.append(ordered[i])
    return result if result else ordered


def global_optimum_via_polygon(mdp: Mdp, beta: float,
                               tol: float = 1e-9) -> PolygonVertex:
    """Exact global mean-variance optimum from the achievable polygon.

    xi = eta + beta eta^2 - beta (mu·w) is convex over the achievable set, so
    its maximum over the occupation-measure polytope sits on a polygon vertex,
    and every polygon vertex is attained by a deterministic policy.
    """
    vertices = achievable_polygon(mdp, tol=tol)
    return max(vertices, key=lambda v: v.xi(beta))
