"""Finite discounted MDP model, policies, and induced Markov reward processes.

States and actions are dense 0-based indices; optional label tables map them
back to user-facing names. All numerical routines operate on indices so that
argmax tie-breaking is deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import csgraph, csr_matrix

PROB_TOL = 1e-12
STATIONARY_TOL = 1e-10
STATIONARY_MAX_ITER = 10**6


class MdpError(Exception):
    """Base class for model errors."""


class MdpValidationError(MdpError):
    """Raised when an MDP fails validation on ingestion."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid MDP: " + "; ".join(self.violations))


class InadmissibleActionError(MdpError):
    """A policy selects an action outside the admissible set of a state."""


class ErgodicityError(MdpError):
    """The induced chain has no unique stationary distribution."""


@dataclass(frozen=True)
class Mdp:
    """Finite discounted MDP ⟨states, actions, transitions, rewards, mu, alpha⟩.

    transitions[x] is a (|A(x)|, |S|) row-stochastic array, rewards[x] a
    (|A(x)|,) vector. Instances are immutable; construct via __init__ or
    `load_mdp`.
    """

    transitions: tuple
    rewards: tuple
    mu: np.ndarray
    alpha: float
    state_labels: tuple = None
    action_labels: tuple = None

    def __init__(self, transitions, rewards, mu, alpha,
                 state_labels=None, action_labels=None, renormalize=True):
        if not 0.0 < float(alpha) < 1.0:
            raise MdpError(f"discount factor must lie in (0, 1), got {alpha}")
        transitions = tuple(np.array(t, dtype=float) for t in transitions)
        rewards = tuple(np.array(r, dtype=float) for r in rewards)
        mu = np.array(mu, dtype=float)
        if renormalize:
            transitions = tuple(_renormalize_rows(t) for t in transitions)
            s = mu.sum()
            if mu.size and abs(s - 1.0) <= PROB_TOL and np.all(mu >= 0):
                mu = mu / s
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "alpha", float(alpha))
        object.__setattr__(self, "state_labels",
                           None if state_labels is None else tuple(state_labels))
        object.__setattr__(self, "action_labels",
                           None if action_labels is None else
                           tuple(tuple(a) for a in action_labels))
        self.mu.setflags(write=False)
        for t in self.transitions:
            t.setflags(write=False)
        for r in self.rewards:
            r.setflags(write=False)

    @property
    def n_states(self) -> int:
        return len(self.transitions)

    def n_actions(self, x: int) -> int:
        return self.transitions[x].shape[0]

    @property
    def max_reward_magnitude(self) -> float:
        return max(float(np.max(np.abs(r))) if r.size else 0.0
                   for r in self.rewards)

    def policy_count(self) -> float:
        """Number of stationary deterministic policies, Π_x |A(x)|."""
        count = 1.0
        for x in range(self.n_states):
            count *= self.n_actions(x)
        return count


def _renormalize_rows(t: np.ndarray) -> np.ndarray:
    t = np.array(t, dtype=float)
    sums = t.sum(axis=1)
    ok = (np.abs(sums - 1.0) <= PROB_TOL) & np.all(t >= 0, axis=1) & (sums > 0)
    t[ok] = t[ok] / sums[ok, None]
    return t


@dataclass(frozen=True)
class Policy:
    """Stationary deterministic policy: one admissible action index per state."""

    actions: np.ndarray

    def __init__(self, actions):
        actions = np.asarray(actions, dtype=int)
        object.__setattr__(self, "actions", actions)
        self.actions.setflags(write=False)

    def action_of(self, x: int) -> int:
        return int(self.actions[x])

    def __eq__(self, other):
        return isinstance(other, Policy) and np.array_equal(self.actions, other.actions)

    def __hash__(self):
        return hash(self.actions.tobytes())

    def encode(self) -> str:
        """Action-index string used in oracle/frontier CSV exports."""
        return "-".join(str(a) for a in self.actions)


@dataclass(frozen=True)
class MixedPolicy:
    """Randomized blend: follow `base` with probability 1 - weight, else `alternative`."""

    base: Policy
    alternative: Policy
    weight: float

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"mixing weight must be in [0, 1], got {self.weight}")


@dataclass(frozen=True)
class MarkovRewardProcess:
    """Policy-induced chain: row-stochastic transition matrix and reward vector."""

    transition_matrix: np.ndarray
    reward_vector: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "transition_matrix",
                           np.asarray(self.transition_matrix, dtype=float))
        object.__setattr__(self, "reward_vector",
                           np.asarray(self.reward_vector, dtype=float))

    @property
    def n_states(self) -> int:
        return self.reward_vector.shape[0]


def validate_mdp(mdp: Mdp) -> list:
    """Collect every invariant violation; an empty list means the MDP is valid.

    Validation reports rather than raises so that callers can surface all
    problems in one pass.
    """
    violations = []
    n = mdp.n_states
    if len(mdp.rewards) != n:
        violations.append(f"rewards cover {len(mdp.rewards)} states, expected {n}")
        return violations
    for x in range(n):
        t, r = mdp.transitions[x], mdp.rewards[x]
        if t.shape[0] == 0:
            violations.append(f"state {x} has an empty action set")
            continue
        if t.shape != (r.shape[0], n):
            violations.append(
                f"state {x}: transition shape {t.shape} inconsistent with "
                f"{r.shape[0]} actions over {n} states")
            continue
        for a in range(t.shape[0]):
            row = t[a]
            if np.any(row < 0):
                violations.append(f"negative transition probability at (x={x}, a={a})")
            s = row.sum()
            if abs(s - 1.0) > PROB_TOL:
                violations.append(
                    f"transition row at (x={x}, a={a}) sums to {s!r}, expected 1")
        if not np.all(np.isfinite(r)):
            violations.append(f"non-finite reward at state {x}")
    if mdp.mu.shape != (n,):
        violations.append(f"mu has length {mdp.mu.shape}, expected {n}")
    else:
        if np.any(mdp.mu < 0):
            violations.append("mu has a negative entry")
        s = mdp.mu.sum()
        if abs(s - 1.0) > PROB_TOL:
            violations.append(f"mu sums to {s!r}, expected 1")
    if not 0.0 < mdp.alpha < 1.0:
        violations.append(f"discount alpha={mdp.alpha!r} outside (0, 1)")
    return violations


def check_policy(mdp: Mdp, policy: Policy) -> None:
    if policy.actions.shape != (mdp.n_states,):
        raise InadmissibleActionError(
            f"policy covers {policy.actions.shape[0]} states, expected {mdp.n_states}")
    for x in range(mdp.n_states):
        if not 0 <= policy.actions[x] < mdp.n_actions(x):
            raise InadmissibleActionError(
                f"policy selects action {policy.actions[x]} at state {x}, "
                f"admissible range is 0..{mdp.n_actions(x) - 1}")


def induce(mdp: Mdp, policy: Policy) -> MarkovRewardProcess:
    """Markov reward process of a policy: P_d(x, ·) = p(· | x, d(x)), r_d(x) = r(x, d(x))."""
    check_policy(mdp, policy)
    n = mdp.n_states
    P = np.empty((n, n))
    r = np.empty(n)
    for x in range(n):
        a = policy.actions[x]
        P[x] = mdp.transitions[x][a]
        r[x] = mdp.rewards[x][a]
    return MarkovRewardProcess(P, r)


def induce_mixed(mdp: Mdp, mix: MixedPolicy) -> MarkovRewardProcess:
    """Blend of the two induced processes: (1-δ)P_d + δP_d' and likewise for rewards."""
    base = induce(mdp, mix.base)
    alt = induce(mdp, mix.alternative)
    d = mix.weight
    return MarkovRewardProcess(
        (1.0 - d) * base.transition_matrix + d * alt.transition_matrix,
        (1.0 - d) * base.reward_vector + d * alt.reward_vector)


def _recurrent_class_count(P: np.ndarray) -> int:
    adj = csr_matrix(P > 0)
    n_comp, labels = csgraph.connected_components(adj, directed=True, connection="strong")
    # a class is recurrent iff it has no outgoing edge to another class
    outgoing = np.zeros(n_comp, dtype=bool)
    src, dst = (P > 0).nonzero()
    mask = labels[src] != labels[dst]
    outgoing[labels[src[mask]]] = True
    return int(n_comp - outgoing.sum())


def stationary_distribution(mrp: MarkovRewardProcess) -> np.ndarray:
    """Unique stationary distribution of the chain, or ErgodicityError.

    Power iteration on the lazy chain (I + P)/2, which shares the stationary
    distribution but is aperiodic, with a direct linear solve as fallback.
    """
    P = mrp.transition_matrix
    n = P.shape[0]
    if _recurrent_class_count(P) != 1:
        raise ErgodicityError("chain has multiple recurrent classes; "
                              "stationary distribution is not unique")
    lazy = 0.5 * (np.eye(n) + P)
    pi = np.full(n, 1.0 / n)
    for _ in range(STATIONARY_MAX_ITER):
        nxt = pi @ lazy
        if np.max(np.abs(nxt - pi)) <= 0.25 * STATIONARY_TOL:
            pi = nxt
            break
        pi = nxt
    if np.max(np.abs(pi @ P - pi)) > STATIONARY_TOL:
        # direct solve of pi (P - I) = 0 with the normalization constraint
        A = np.vstack([P.T - np.eye(n), np.ones(n)])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        pi, *_ = np.linalg.lstsq(A, b, rcond=None)
        pi = np.clip(pi, 0.0, None)
        pi = pi / pi.sum()
        if np.max(np.abs(pi @ P - pi)) > STATIONARY_TOL:
            raise ErgodicityError("stationary distribution iteration did not converge")
    pi = pi / pi.sum()
    return pi


# ---------------------------------------------------------------------------
# JSON file format


def save_mdp(mdp: Mdp, path) -> None:
    """Write an MDP to the JSON interchange format (zero entries omitted)."""
    n = mdp.n_states
    states = list(mdp.state_labels) if mdp.state_labels else [f"s{x}" for x in range(n)]
    if mdp.action_labels:
        actions = [list(a) for a in mdp.action_labels]
    else:
        actions = [[f"a{a}" for a in range(mdp.n_actions(x))] for x in range(n)]
    transitions = []
    rewards = []
    for x in range(n):
        for a in range(mdp.n_actions(x)):
            for y in range(n):
                p = mdp.transitions[x][a, y]
                if p != 0.0:
                    transitions.append({"state": states[x], "action": actions[x][a],
                                        "next_state": states[y], "prob": p})
            v = mdp.rewards[x][a]
            if v != 0.0:
                rewards.append({"state": states[x], "action": actions[x][a], "value": v})
    doc = {"states": states, "actions": actions, "transitions": transitions,
           "rewards": rewards, "mu": mdp.mu.tolist(), "alpha": mdp.alpha}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_mdp(path) -> Mdp:
    """Load and validate an MDP from the JSON interchange format.

    Omitted (state, action, next_state) triples mean probability zero and
    omitted rewards mean zero. Duplicate records are a load error.
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    problems = []
    for key in ("states", "actions", "mu", "alpha"):
        if key not in doc:
            problems.append(f"missing top-level key {key!r}")
    if problems:
        raise MdpValidationError(problems)
    states = list(doc["states"])
    state_index = {s: i for i, s in enumerate(states)}
    if len(state_index) != len(states):
        raise MdpValidationError(["duplicate state labels"])
    if len(doc["actions"]) != len(states):
        raise MdpValidationError(
            [f"actions lists {len(doc['actions'])} states, expected {len(states)}"])
    action_index = []
    for x, acts in enumerate(doc["actions"]):
        idx = {a: i for i, a in enumerate(acts)}
        if len(idx) != len(acts):
            problems.append(f"duplicate action labels at state {states[x]!r}")
        action_index.append(idx)
    n = len(states)
    transitions = [np.zeros((len(doc["actions"][x]), n)) for x in range(n)]
    rewards = [np.zeros(len(doc["actions"][x])) for x in range(n)]
    seen_t = set()
    for rec in doc.get("transitions", []):
        try:
            x = state_index[rec["state"]]
            a = action_index[x][rec["action"]]
            y = state_index[rec["next_state"]]
        except KeyError as exc:
            problems.append(f"transition record references unknown label {exc}")
            continue
        if (x, a, y) in seen_t:
            problems.append(
                f"duplicate transition record ({rec['state']}, {rec['action']}, "
                f"{rec['next_state']})")
            continue
        seen_t.add((x, a, y))
        transitions[x][a, y] = float(rec["prob"])
    seen_r = set()
    for rec in doc.get("rewards", []):
        try:
            x = state_index[rec["state"]]
            a = action_index[x][rec["action"]]
        except KeyError as exc:
            problems.append(f"reward record references unknown label {exc}")
            continue
        if (x, a) in seen_r:
            problems.append(f"duplicate reward record ({rec['state']}, {rec['action']})")
            continue
        seen_r.add((x, a))
        rewards[x][a] = float(rec["value"])
    if problems:
        raise MdpValidationError(problems)
    mdp = Mdp(transitions, rewards, doc["mu"], doc["alpha"],
              state_labels=states, action_labels=doc["actions"])
    violations = validate_mdp(mdp)
    if violations:
        raise MdpValidationError(violations)
    return mdp
