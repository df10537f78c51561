"""Portfolio-management MDP: a liquid asset plus a maturing non-liquid asset.

Cash is split into integer units. Each epoch the investor moves units between
a risk-free liquid asset and a non-liquid asset that pays interest only at
maturity, can default at maturity, and whose rate switches randomly between a
low and a high regime. The default event is realized on state entry (a flag
in the state), so the per-step reward is a deterministic state function and
the standard evaluation formulas apply unchanged.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .mdp import Mdp, Policy
from .solvers import SolverConfig, bilevel_solve

# Default consequence at maturity:
#   forfeit-interest: the matured interest is lost, the unit stays in play.
#   penalize-principal: interest lost and the principal charged against the
#     reward, but the unit stays in play (wealth tracked via reward only).
#   forfeit-principal: interest lost and the unit destroyed for good.
DEFAULT_MODES = ("forfeit-interest", "penalize-principal", "forfeit-principal")
INITIAL_RATES = ("uniform", "low", "high")

# reference risk-neutral anchor used to pick the default consequence
RISK_NEUTRAL_ANCHOR = (0.4507, 1.3468)
CALIBRATION_TOL = 0.02


@dataclass(frozen=True)
class PortfolioParams:
    alpha: float = 0.95
    beta: float = 1.0
    maturity: int = 3
    units: int = 3
    r_liquid: float = 0.03
    r_nonliquid_low: float = 0.4
    r_nonliquid_high: float = 1.0
    p_switch: float = 0.1
    p_default: float = 0.1
    default_mode: str = "penalize-principal"
    initial_rate: str = "low"

    def validate(self) -> list:
        problems = []
        if not 0.0 < self.alpha < 1.0:
            problems.append(f"alpha={self.alpha!r} outside (0, 1)")
        if self.beta < 0:
            problems.append("beta must be nonnegative")
        if self.maturity < 1:
            problems.append("maturity must be at least 1")
        if self.units < 0:
            problems.append("units must be nonnegative")
        for name in ("p_switch", "p_default"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                problems.append(f"{name}={p!r} outside [0, 1]")
        if not np.isfinite([self.r_liquid, self.r_nonliquid_low,
                            self.r_nonliquid_high]).all():
            problems.append("interest rates must be finite")
        if self.r_nonliquid_low > self.r_nonliquid_high:
            problems.append("low non-liquid rate exceeds high rate")
        if self.default_mode not in DEFAULT_MODES:
            problems.append(f"default_mode must be one of {DEFAULT_MODES}")
        if self.initial_rate not in INITIAL_RATES:
            problems.append(f"initial_rate must be one of {INITIAL_RATES}")
        return problems


@dataclass(frozen=True)
class PortfolioState:
    """holdings[0] is liquid; holdings[k] matures in k-1 steps; holdings[1] matures now."""

    holdings: tuple
    rate: str  # "low" or "high"
    defaulted: bool

    def label(self) -> str:
        flag = "def" if self.defaulted else "ok"
        return "-".join(str(h) for h in self.holdings) + f"|{self.rate}|{flag}"


class PortfolioError(Exception):
    pass


def _enumerate_states(params: PortfolioParams) -> list:
    m = params.maturity
    n = params.units
    if n == 0:
        return [PortfolioState(holdings=(0,) * (m + 1), rate="low", defaulted=False)]
    if params.default_mode == "forfeit-principal":
        totals = list(range(n + 1))
    else:
        totals = [n]
    states = []
    for total in totals:
        for holdings in _compositions(total, m + 1):
            for rate in ("low", "high"):
                flags = (False, True) if holdings[1] > 0 else (False,)
                for flag in flags:
                    states.append(PortfolioState(holdings=holdings, rate=rate,
                                                 defaulted=flag))
    states.sort(key=lambda s: (s.holdings, s.rate, s.defaulted))
    return states


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _reward(params: PortfolioParams, state: PortfolioState) -> float:
    rate = (params.r_nonliquid_low if state.rate == "low"
            else params.r_nonliquid_high)
    x0, x1 = state.holdings[0], state.holdings[1]
    reward = params.r_liquid * x0
    if state.defaulted:
        if params.default_mode in ("penalize-principal", "forfeit-principal"):
            reward -= x1
    else:
        reward += rate * x1
    return reward


def _usable(params: PortfolioParams, state: PortfolioState) -> int:
    """Units available for reinvestment: liquid plus surviving maturing units."""
    x0, x1 = state.holdings[0], state.holdings[1]
    if params.default_mode == "forfeit-principal" and state.defaulted:
        return x0
    return x0 + x1


def build_portfolio_mdp(params: PortfolioParams) -> Mdp:
    """Enumerate portfolio states and assemble the MDP with labels attached."""
    problems = params.validate()
    if problems:
        raise PortfolioError("invalid parameters: " + "; ".join(problems))
    states = _enumerate_states(params)
    index = {s: i for i, s in enumerate(states)}
    m = params.maturity
    n_states = len(states)
    transitions, rewards, action_labels = [], [], []
    if params.units == 0:
        t = np.zeros((1, 1))
        t[0, 0] = 1.0
        return Mdp([t], [np.zeros(1)], [1.0], params.alpha,
                   state_labels=[states[0].label()], action_labels=[["0"]])
    for s in states:
        usable = _usable(params, s)
        n_act = usable + 1
        t = np.zeros((n_act, n_states))
        r = np.empty(n_act)
        for a in range(n_act):
            h = s.holdings
            nxt = (usable - a,) + h[2:m + 1] + (a,)
            x1_next = nxt[1] if m >= 1 else 0
            p_def = params.p_default if x1_next > 0 else 0.0
            for rate_next, p_rate in (( s.rate, 1.0 - params.p_switch),
                                      (_other(s.rate), params.p_switch)):
                for flag_next, p_flag in ((False, 1.0 - p_def), (True, p_def)):
                    if p_rate * p_flag == 0.0:
                        continue
                    y = index[PortfolioState(holdings=nxt, rate=rate_next,
                                             defaulted=flag_next)]
                    t[a, y] += p_rate * p_flag
            r[a] = _reward(params, s)
        transitions.append(t)
        rewards.append(r)
        action_labels.append([str(a) for a in range(n_act)])
    mu = initial_distribution(params, states)
    return Mdp(transitions, rewards, mu, params.alpha,
               state_labels=[s.label() for s in states],
               action_labels=action_labels)


def _other(rate: str) -> str:
    return "high" if rate == "low" else "low"


def initial_distribution(params: PortfolioParams, states=None) -> np.ndarray:
    """All units start liquid; mass splits over the rate regime per initial_rate."""
    if states is None:
        states = _enumerate_states(params)
    mu = np.zeros(len(states))
    if params.units == 0:
        mu[0] = 1.0
        return mu
    start = (params.units,) + (0,) * params.maturity
    weights = {"uniform": {"low": 0.5, "high": 0.5},
               "low": {"low": 1.0, "high": 0.0},
               "high": {"low": 0.0, "high": 1.0}}[params.initial_rate]
    for i, s in enumerate(states):
        if s.holdings == start and not s.defaulted:
            mu[i] = weights[s.rate]
    return mu


def parse_state_label(label: str) -> PortfolioState:
    try:
        holdings, rate, flag = label.split("|")
        return PortfolioState(holdings=tuple(int(h) for h in holdings.split("-")),
                              rate=rate, defaulted=flag == "def")
    except (ValueError, AttributeError) as exc:
        raise PortfolioError(f"not a portfolio state label: {label!r}") from exc


def is_laddered(policy: Policy, mdp: Mdp) -> bool:
    """True iff the policy invests one unit whenever a unit is available."""
    if mdp.state_labels is None:
        raise PortfolioError("MDP carries no portfolio state labels")
    for x, label in enumerate(mdp.state_labels):
        s = parse_state_label(label)
        expected = 1 if s.holdings[0] + s.holdings[1] >= 1 else 0
        if policy.actions[x] != expected:
            return False
    return True


def laddered_policy(mdp: Mdp) -> Policy:
    actions = np.zeros(mdp.n_states, dtype=int)
    for x, label in enumerate(mdp.state_labels):
        s = parse_state_label(label)
        if s.holdings[0] + s.holdings[1] >= 1:
            actions[x] = 1
    return Policy(actions)


# ---------------------------------------------------------------------------
# Calibration of the underdetermined default consequence


@dataclass(frozen=True)
class CalibrationResult:
    default_mode: str
    initial_rate: str
    matched: bool
    risk_neutral: dict  # per (mode, rate): eta/zeta of the risk-neutral optimum

    def manifest(self) -> dict:
        return {"default_mode": self.default_mode,
                "initial_rate": self.initial_rate,
                "anchor": list(RISK_NEUTRAL_ANCHOR),
                "anchor_tolerance": CALIBRATION_TOL,
                "anchor_matched": self.matched,
                "risk_neutral_by_variant": self.risk_neutral}


def calibrate_default_mode(params: PortfolioParams) -> CalibrationResult:
    """Pick the default consequence and initial rate that hit the anchor.

    Both the default semantics and the interest-rate regime at the first
    epoch are underdetermined by the reference description, so the builder
    tries every combination, solves the beta = 0 problem exactly, and keeps
    the first one whose optimal (mean, variance) reproduces the reference
    anchor. Falls back to the params as given if nothing matches.
    """
    from dataclasses import replace
    outcomes = {}
    chosen = None
    for mode in DEFAULT_MODES:
        for rate in INITIAL_RATES:
            mdp = build_portfolio_mdp(replace(params, default_mode=mode,
                                              initial_rate=rate))
            result = bilevel_solve(mdp, beta=0.0,
                                   config=SolverConfig(inner="pi-standard"))
            outcomes[f"{mode}/{rate}"] = {"eta": result.bundle.eta,
                                          "zeta": result.bundle.zeta}
            hit = (abs(result.bundle.eta - RISK_NEUTRAL_ANCHOR[0]) <= CALIBRATION_TOL
                   and abs(result.bundle.zeta - RISK_NEUTRAL_ANCHOR[1])
                   <= CALIBRATION_TOL)
            if hit and chosen is None:
                chosen = (mode, rate)
    if chosen is None:
        return CalibrationResult(default_mode=params.default_mode,
                                 initial_rate=params.initial_rate,
                                 matched=False, risk_neutral=outcomes)
    return CalibrationResult(default_mode=chosen[0], initial_rate=chosen[1],
                             matched=True, risk_neutral=outcomes)


def canonical_portfolio(params: PortfolioParams = None):
    """The default-parameter instance under the calibrated default handling.

    Returns (mdp, manifest_dict); the manifest records every calibration
    decision so the instance is reproducible from the file alone.
    """
    from dataclasses import replace
    if params is None:
        params = PortfolioParams()
    calibration = calibrate_default_mode(params)
    params = replace(params, default_mode=calibration.default_mode,
                     initial_rate=calibration.initial_rate)
    mdp = build_portfolio_mdp(params)
    manifest = {"params": asdict(params), "calibration": calibration.manifest(),
                "n_states": mdp.n_states}
    return mdp, manifest


def load_params(path) -> PortfolioParams:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    known = set(PortfolioParams.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise PortfolioError(f"unknown parameter keys: {sorted(unknown)}")
    params = PortfolioParams(**doc)
    problems = params.validate()
    if problems:
        raise PortfolioError("invalid parameters: " + "; ".join(problems))
    return params


def save_params(params: PortfolioParams, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(asdict(params), fh, indent=1)
        fh.write("\n")
