"""Risk-aversion sweeps and the convex efficient frontier of (mean, variance) pairs."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .mdp import Mdp, Policy
from .oracle import (ENUMERATION_CAP, EnumerationCapError, achievable_polygon,
                     enumerate_policy_performances)
from .solvers import SolverConfig, bilevel_solve

DEFAULT_BETA_GRID = (0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0)
_CROSS_TOL = 1e-10


@dataclass(frozen=True)
class FrontierPoint:
    beta: float
    eta: float
    zeta: float
    xi: float
    policy: Policy
    source: str  # "solver" or "oracle"
    is_vertex: bool = False

    def __post_init__(self):
        if abs(self.xi - (self.eta - self.beta * self.zeta)) > 1e-10:
            raise ValueError("xi must equal eta - beta * zeta")


def beta_sweep(mdp: Mdp, betas=DEFAULT_BETA_GRID, config: SolverConfig = None,
               use_oracle: bool = False, cap: int = ENUMERATION_CAP) -> list:
    """One frontier point per beta, from independent solves (or enumeration).

    Non-converged solves still contribute their best policy, tagged by the
    converged flag on the underlying result; a sweep never aborts on one beta.
    """
    if not betas:
        raise ValueError("betas must be nonempty")
    if any(b < 0 for b in betas):
        raise ValueError("betas must be nonnegative")
    points = []
    for beta in betas:
        if use_oracle:
            best = max(enumerate_policy_performances(mdp, beta, cap=cap),
                       key=lambda rec: rec[3])
            policy, eta, zeta, xi = best
            source = "oracle"
        else:
            result = bilevel_solve(mdp, beta, config)
            policy = result.policy
            eta, zeta, xi = result.bundle.eta, result.bundle.zeta, result.bundle.xi
            source = "solver"
        points.append(FrontierPoint(beta=float(beta), eta=eta, zeta=zeta,
                                    xi=xi, policy=policy, source=source))
    return points


def convex_efficient_frontier_indices(etas, zetas) -> list:
    """Indices of Pareto-efficient convex-hull vertices, ordered by increasing zeta.

    Each returned vertex maximizes eta - beta*zeta for some beta >= 0;
    collinear points are not vertices.
    """
    etas = np.asarray(etas, dtype=float)
    zetas = np.asarray(zetas, dtype=float)
    n = etas.shape[0]
    if n == 0:
        return []
    order = sorted(range(n), key=lambda i: (zetas[i], -etas[i]))
    # for equal zeta only the largest eta can be efficient
    filtered = []
    last_z = None
    for i in order:
        if last_z is not None and abs(zetas[i] - last_z) <= 1e-12:
            continue
        filtered.append(i)
        last_z = zetas[i]
    # upper hull in the (zeta, eta) plane, left to right
    hull = []
    for i in filtered:
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (zetas[a] - zetas[o]) * (etas[i] - etas[o]) \
                - (etas[a] - etas[o]) * (zetas[i] - zetas[o])
            if cross >= -_CROSS_TOL:  # not a strict right turn: a is no vertex
                hull.pop()
            else:
                break
        hull.append(i)
    # keep the strictly ascending part: supporting slopes must be positive
    result = [hull[0]]
    for i in hull[1:]:
        if etas[i] > etas[result[-1]] + _CROSS_TOL:
            result.append(i)
        else:
            break
    return result


def convex_efficient_frontier(points) -> list:
    """Vertex sublist of (eta, zeta) pairs, ordered by increasing zeta."""
    pts = list(points)
    idx = convex_efficient_frontier_indices([p[0] for p in pts],
                                            [p[1] for p in pts])
    return [pts[i] for i in idx]


def supporting_betas(vertices) -> list:
    """A supporting risk-aversion weight per frontier vertex.

    Vertices arrive ordered by increasing zeta. Each vertex after the first
    gets the tie slope toward its predecessor, the largest beta at which it
    still maximizes eta - beta*zeta; the first vertex is supported by any
    larger beta, so it reuses the slope toward its successor (or 0 when the
    frontier is a single point).
    """
    betas = []
    for k, (eta, zeta) in enumerate(vertices):
        if k == 0:
            if len(vertices) == 1:
                betas.append(0.0)
            else:
                ne, nz = vertices[1]
                betas.append((ne - eta) / (nz - zeta))
        else:
            pe, pz = vertices[k - 1]
            betas.append((eta - pe) / (zeta - pz))
    return betas


def oracle_frontier(mdp: Mdp, cap: int = ENUMERATION_CAP) -> list:
    """Exact convex efficient frontier as FrontierPoints tagged 'oracle'.

    Enumerates all policies when feasible; otherwise falls back to the
    convex-support polygon, whose vertices contain every frontier vertex.
    """
    try:
        cloud = [(p, eta, zeta) for p, eta, zeta, _ in
                 enumerate_policy_performances(mdp, beta=0.0, cap=cap)]
    except EnumerationCapError:
        cloud = [(v.policy, v.eta, v.zeta()) for v in achievable_polygon(mdp)]
    chosen = convex_efficient_frontier_indices([c[1] for c in cloud],
                                               [c[2] for c in cloud])
    betas = supporting_betas([(cloud[i][1], cloud[i][2]) for i in chosen])
    # report each vertex with the beta at which it ties with the next riskier
    # vertex; the riskiest (largest-mean) vertex supports beta = 0
    betas = betas[1:] + [0.0]
    points = []
    for b, i in zip(betas, chosen):
        policy, eta, zeta = cloud[i]
        points.append(FrontierPoint(beta=b, eta=eta, zeta=zeta,
                                    xi=eta - b * zeta, policy=policy,
                                    source="oracle", is_vertex=True))
    return points


def export_frontier_csv(points, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beta", "eta", "zeta", "xi", "policy", "source",
                         "is_vertex"])
        for p in points:
            writer.writerow([f"{p.beta:.10g}", f"{p.eta:.10g}", f"{p.zeta:.10g}",
                             f"{p.xi:.10g}", p.policy.encode(), p.source,
                             int(p.is_vertex)])


def export_plot_data(points, path) -> None:
    """Two-column zeta,eta pairs plus vertex flags for external plotting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["zeta", "eta", "is_vertex"])
        for p in sorted(points, key=lambda q: (q.zeta, q.eta)):
            writer.writerow([f"{p.zeta:.10g}", f"{p.eta:.10g}", int(p.is_vertex)])
