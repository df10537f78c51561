import json

import numpy as np
import pytest

from mvmdp.mdp import (Mdp, MdpError, MixedPolicy, Policy, check_policy,
                       induce, induce_mixed, load_mdp, save_mdp,
                       stationary_distribution, validate_mdp)

from conftest import make_random_mdp, random_policy


def two_state_mdp(alpha=0.9):
    t0 = np.array([[0.7, 0.3], [0.2, 0.8]])
    t1 = np.array([[0.5, 0.5]])
    return Mdp([t0, t1], [np.array([1.0, -1.0]), np.array([0.5])],
               [0.6, 0.4], alpha)


class TestConstruction:
    def test_basic_fields(self):
        mdp = two_state_mdp()
        assert mdp.n_states == 2
        assert mdp.alpha == 0.9
        assert mdp.policy_count() == 2

    def test_rows_are_renormalized(self):
        t = np.array([[0.7, 0.3 + 5e-13]])
        mdp = Mdp([t, np.array([[0.5, 0.5]])],
                  [np.array([0.0]), np.array([0.0])], [1.0, 0.0], 0.5)
        assert np.isclose(mdp.transitions[0].sum(), 1.0, atol=1e-15)

    def test_bad_alpha_rejected(self):
        with pytest.raises(MdpError):
            two_state_mdp(alpha=1.0)
        with pytest.raises(MdpError):
            two_state_mdp(alpha=0.0)

    def test_validate_reports_bad_rows(self):
        mdp = two_state_mdp()
        broken = Mdp.__new__(Mdp)
        object.__setattr__(broken, "transitions",
                           (np.array([[0.5, 0.1]]), mdp.transitions[1]))
        object.__setattr__(broken, "rewards", mdp.rewards)
        object.__setattr__(broken, "mu", mdp.mu)
        object.__setattr__(broken, "alpha", mdp.alpha)
        object.__setattr__(broken, "state_labels", None)
        object.__setattr__(broken, "action_labels", None)
        assert validate_mdp(broken)


class TestPolicy:
    def test_encode_roundtrip(self):
        p = Policy(np.array([0, 1, 2]))
        assert p.encode() == "0-1-2"

    def test_check_policy_rejects_out_of_range(self):
        mdp = two_state_mdp()
        with pytest.raises(MdpError):
            check_policy(mdp, Policy(np.array([2, 0])))

    def test_induce_selects_rows(self):
        mdp = two_state_mdp()
        mrp = induce(mdp, Policy(np.array([1, 0])))
        assert np.allclose(mrp.transition_matrix[0], [0.2, 0.8])
        assert mrp.reward_vector[0] == -1.0

    def test_mixed_policy_blends(self):
        mdp = two_state_mdp()
        d = Policy(np.array([0, 0]))
        dp = Policy(np.array([1, 0]))
        mix = induce_mixed(mdp, MixedPolicy(d, dp, 0.25))
        expected = 0.75 * mdp.transitions[0][0] + 0.25 * mdp.transitions[0][1]
        assert np.allclose(mix.transition_matrix[0], expected)


class TestStationaryDistribution:
    def test_matches_eigenvector(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            mdp = make_random_mdp(rng)
            mrp = induce(mdp, random_policy(rng, mdp))
            pi = stationary_distribution(mrp)
            assert np.max(np.abs(pi @ mrp.transition_matrix - pi)) < 1e-9
            assert abs(pi.sum() - 1.0) < 1e-12

    def test_periodic_chain(self):
        # two-cycle has no aperiodic limit but a unique stationary vector
        t = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
        mdp = Mdp([t[0], t[1]], [np.zeros(1), np.zeros(1)], [1.0, 0.0], 0.5)
        mrp = induce(mdp, Policy(np.array([0, 0])))
        pi = stationary_distribution(mrp)
        assert np.allclose(pi, [0.5, 0.5])


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(8)
        mdp = make_random_mdp(rng)
        path = tmp_path / "m.json"
        save_mdp(mdp, path)
        back = load_mdp(path)
        assert back.n_states == mdp.n_states
        assert np.isclose(back.alpha, mdp.alpha)
        for x in range(mdp.n_states):
            assert np.allclose(back.transitions[x], mdp.transitions[x])
            assert np.allclose(back.rewards[x], mdp.rewards[x])
        assert np.allclose(back.mu, mdp.mu)

    def test_duplicate_entries_rejected(self, tmp_path):
        mdp = two_state_mdp()
        path = tmp_path / "m.json"
        save_mdp(mdp, path)
        doc = json.loads(path.read_text())
        doc["transitions"].append(dict(doc["transitions"][0]))
        path.write_text(json.dumps(doc))
        with pytest.raises(MdpError):
            load_mdp(path)

    def test_omitted_probabilities_are_zero(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({
            "states": ["a", "b"],
            "actions": [["x"], ["x"]],
            "transitions": [
                {"state": "a", "action": "x", "next_state": "a", "prob": 1.0},
                {"state": "b", "action": "x", "next_state": "a", "prob": 1.0},
            ],
            "rewards": [{"state": "a", "action": "x", "value": 2.0}],
            "mu": [1.0, 0.0],
            "alpha": 0.5,
        }))
        mdp = load_mdp(path)
        assert mdp.transitions[0][0, 1] == 0.0
        assert mdp.rewards[1][0] == 0.0
        assert mdp.mu[1] == 0.0
