import numpy as np
import pytest

from mvmdp.mdp import Mdp, Policy
from mvmdp.portfolio import canonical_portfolio, laddered_policy

# one line per acceptance criterion, filled in by tests/test_acceptance.py and
# echoed after the run so the report survives output capturing
acceptance_lines = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)


def make_random_mdp(rng, n_max=8, a_max=3, alpha_range=(0.3, 0.99),
                    max_policies=None):
    """Dense random MDP with mildly smoothed rows so every state communicates."""
    while True:
        n = int(rng.integers(2, n_max + 1))
        transitions, rewards, count = [], [], 1
        for _ in range(n):
            n_act = int(rng.integers(1, a_max + 1))
            count *= n_act
            t = rng.random((n_act, n)) + 1e-3
            t /= t.sum(axis=1, keepdims=True)
            transitions.append(t)
            rewards.append(rng.normal(size=n_act))
        if max_policies is not None and count > max_policies:
            continue
        mu = rng.random(n) + 1e-3
        mu /= mu.sum()
        alpha = float(rng.uniform(*alpha_range))
        return Mdp(transitions, rewards, mu, alpha)


def random_policy(rng, mdp):
    return Policy(np.array([int(rng.integers(mdp.transitions[x].shape[0]))
                            for x in range(mdp.n_states)]))


@pytest.fixture(scope="session")
def portfolio():
    """The calibrated canonical portfolio instance and its manifest."""
    return canonical_portfolio()


@pytest.fixture(scope="session")
def portfolio_mdp(portfolio):
    return portfolio[0]


@pytest.fixture(scope="session")
def zero_policy(portfolio_mdp):
    return Policy(np.zeros(portfolio_mdp.n_states, dtype=int))


@pytest.fixture(scope="session")
def ladder_policy(portfolio_mdp):
    return laddered_policy(portfolio_mdp)
