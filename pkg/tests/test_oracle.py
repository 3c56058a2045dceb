import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msglab.env import ReachingGoals, RecommendationLetter
from msglab.oracle import (ExactScheme, TabularGame, TabularMSG, UnsupportedEnvError,
                           check_incentive_compatibility, exact_msg_value, finite_difference_grad,
                           recommendation_letter_game, recommendation_letter_msg,
                           relaxed_sender_value, sender_value, solve_persuasion_lp)

OBEDIENT = np.eye(2)


def test_lp_recommendation_letter():
    scheme, value = solve_persuasion_lp(recommendation_letter_game())
    assert abs(value - 2 / 3) <= 1e-9
    # rows: weak, strong; columns: no-hire, hire
    np.testing.assert_allclose(scheme.phi, [[0.5, 0.5], [0.0, 1.0]], atol=1e-6)


def test_lp_highs_fallback_agrees():
    game = recommendation_letter_game()
    scheme, value = solve_persuasion_lp(game, max_vertex_combinations=0)
    assert value == pytest.approx(2 / 3, abs=1e-9)
    np.testing.assert_allclose(scheme.phi, [[0.5, 0.5], [0.0, 1.0]], atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 3), st.integers(2, 3))
def test_lp_enumeration_matches_highs(seed, s_n, a_n):
    rng = np.random.default_rng(seed)
    prior = rng.dirichlet(np.ones(s_n))
    game = TabularGame(prior, rng.normal(size=(s_n, a_n)), rng.normal(size=(s_n, a_n)))
    _, v_enum = solve_persuasion_lp(game)
    _, v_highs = solve_persuasion_lp(game, max_vertex_combinations=0)
    assert v_enum == pytest.approx(v_highs, abs=1e-7)
    # full disclosure is always obedient, so the optimum is at least its value
    full = (prior * (game.sender_payoff[np.arange(s_n), game.receiver_payoff.argmax(axis=1)])).sum()
    assert v_enum >= full - 1e-9


def test_lp_indifferent_receiver_gives_first_best():
    rng = np.random.default_rng(3)
    w_i = rng.normal(size=(3, 3))
    prior = np.array([0.2, 0.5, 0.3])
    game = TabularGame(prior, w_i, np.zeros((3, 3)))
    _, value = solve_persuasion_lp(game)
    assert value == pytest.approx(float(prior @ w_i.max(axis=1)), abs=1e-9)


def test_lp_value_dominates_grid_over_general_schemes():
    # three signals, receiver best-responds to each posterior with sender-preferred ties
    game = recommendation_letter_game()
    grid = np.linspace(0, 1, 21)
    best = -np.inf
    for a, b, c, d in itertools.product(grid, repeat=4):
        if a + b > 1 or c + d > 1:
            continue
        phi = np.array([[a, b, 1 - a - b], [c, d, 1 - c - d]])
        value = 0.0
        for sig in range(3):
            joint = game.prior * phi[:, sig]
            if joint.sum() <= 0:
                continue
            gains = joint @ game.receiver_payoff
            best_acts = np.flatnonzero(gains >= gains.max() - 1e-12)
            value += max(joint @ game.sender_payoff[:, act] for act in best_acts)
        best = max(best, value)
    _, lp = solve_persuasion_lp(game)
    assert best <= lp + 1e-9
    assert best == pytest.approx(lp, abs=1e-9)


def test_ic_checker_on_lp_scheme():
    game = recommendation_letter_game()
    scheme, _ = solve_persuasion_lp(game)
    reports = check_incentive_compatibility(game, scheme)
    assert all(r.follows for r in reports)
    np.testing.assert_allclose(reports[1].posterior, [0.5, 0.5], atol=1e-12)
    assert reports[1].best_response == 1


def test_ic_checker_honest_and_uninformative():
    game = recommendation_letter_game()
    honest = check_incentive_compatibility(game, np.eye(2))
    assert honest[1].slack == pytest.approx(1 / 3, abs=1e-12)
    assert honest[0].slack == pytest.approx(2 / 3, abs=1e-12)
    babble = check_incentive_compatibility(game, np.array([[0.0, 1.0], [0.0, 1.0]]))
    assert abs(babble[1].slack + 1 / 3) <= 1e-9
    assert not babble[1].follows
    assert not babble[0].reachable


def test_scheme_validation():
    with pytest.raises(ValueError):
        ExactScheme(np.array([[0.7, 0.7], [0.5, 0.5]]))
    with pytest.raises(ValueError):
        TabularGame([0.5, 0.6], np.zeros((2, 2)), np.zeros((2, 2)))


@pytest.mark.parametrize("eps", [0.1, 0.25])
def test_exact_values_of_equilibria(eps):
    msg = recommendation_letter_msg()
    regimes = [([[1, 0], [1, 0]], (0.0, 0.0)), ([[1, 0], [0, 1]], (1 / 3, 1 / 3)),
               ([[0.5 + eps, 0.5 - eps], [0, 1]], (2 / 3 - 2 * eps / 3, 2 * eps / 3))]
    for phi, (vi, vj) in regimes:
        vals = exact_msg_value(msg, np.array(phi, float), OBEDIENT, 0.0)
        assert abs(vals.value_sender - vi) <= 1e-9
        assert abs(vals.value_receiver - vj) <= 1e-9


def test_exact_value_discounted_recletter():
    vals = exact_msg_value(RecommendationLetter(), np.eye(2), OBEDIENT, 0.9)
    assert vals.value_sender == pytest.approx(1 / 3 / (1 - 0.9), abs=1e-9)
    np.testing.assert_allclose(vals.occupancy, [2 / 3, 1 / 3], atol=1e-12)
    np.testing.assert_allclose(vals.w_sender[:, 1] - vals.w_sender[:, 0], [1.0, 1.0])


def test_constant_reward_chain():
    rng = np.random.default_rng(0)
    p = rng.dirichlet(np.ones(4), size=(4, 2))
    msg = TabularMSG(np.full(4, 0.25), p, np.full((4, 2), 2.0), np.full((4, 2), -1.0),
                     np.zeros(4, dtype=int))
    phi = rng.dirichlet(np.ones(3), size=4)
    pi = rng.dirichlet(np.ones(2), size=3)
    vals = exact_msg_value(msg, phi, pi, 0.95)
    np.testing.assert_allclose(vals.v_sender, 2.0 / 0.05)
    np.testing.assert_allclose(vals.v_receiver, -1.0 / 0.05)
    assert vals.occupancy.sum() == pytest.approx(1.0)
    assert np.all(vals.occupancy >= 0)


def test_exact_value_rejects_unsupported():
    with pytest.raises(UnsupportedEnvError):
        exact_msg_value(ReachingGoals(3), np.eye(2), OBEDIENT, 0.0)
    with pytest.raises(ValueError):
        exact_msg_value(recommendation_letter_msg(), np.eye(2), OBEDIENT, 1.0)


def test_finite_differences():
    g = finite_difference_grad(lambda x: float((x ** 3).sum()), np.array([1.0, -2.0]))
    np.testing.assert_allclose(g, [3.0, 12.0], rtol=1e-8)
    with pytest.raises(ValueError):
        finite_difference_grad(lambda x: 0.0, np.zeros(2), 0.0)


def test_relaxed_value_approaches_hard_value_at_low_temperature():
    game = recommendation_letter_game()
    logits = np.array([[0.3, -0.2], [-0.4, 0.8]])
    theta = np.array([[2.0, -1.0], [-1.0, 2.0]])

    def probs(x):
        z = x @ theta
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    phi = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    pi = probs(np.eye(2))
    hard = sum(game.prior[s] * phi[s] @ pi @ game.sender_payoff[s] for s in range(2))
    relaxed = relaxed_sender_value(game.prior, logits, probs, game.sender_payoff, 0.01)
    assert relaxed == pytest.approx(hard, abs=1e-3)
    with pytest.raises(ValueError):
        relaxed_sender_value(game.prior, np.zeros((2, 3)), probs, game.sender_payoff)


def test_sender_value_helper():
    game = recommendation_letter_game()
    assert sender_value(game, np.eye(2)) == pytest.approx(1 / 3)
