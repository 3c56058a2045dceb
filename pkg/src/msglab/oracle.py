"""Exact reference computations for small tabular games.

* ``solve_persuasion_lp``: optimal direct signaling scheme of a one-shot
  persuasion game (maximize the sender's expected payoff subject to the
  receiver's obedience constraints).
* ``exact_msg_value``: value functions and discounted occupancy of a
  tabular Markov signaling game, by solving the Bellman linear system.
* ``check_incentive_compatibility``: posterior / best-response report per
  recommended action.
* ``finite_difference_grad``: central differences.
* ``relaxed_sender_value``: sender value when the receiver acts on a
  relaxed (Gumbel-softmax) binary signal, integrated by quadrature.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

TOL = 1e-9


class UnsupportedEnvError(TypeError):
    pass


@dataclass
class TabularGame:
    prior: np.ndarray            # (S,)
    sender_payoff: np.ndarray    # (S, A)
    receiver_payoff: np.ndarray  # (S, A)

    def __post_init__(self):
        self.prior = np.asarray(self.prior, dtype=np.float64)
        self.sender_payoff = np.asarray(self.sender_payoff, dtype=np.float64)
        self.receiver_payoff = np.asarray(self.receiver_payoff, dtype=np.float64)
        if abs(self.prior.sum() - 1.0) > TOL or np.any(self.prior < 0):
            raise ValueError("prior must be a probability vector")
        if self.sender_payoff.shape != self.receiver_payoff.shape:
            raise ValueError("payoff matrices differ in shape")
        if self.sender_payoff.shape[0] != len(self.prior):
            raise ValueError("payoff rows must match the prior")
        if not (np.all(np.isfinite(self.sender_payoff)) and np.all(np.isfinite(self.receiver_payoff))):
            raise ValueError("payoffs must be finite")

    @property
    def n_states(self):
        return len(self.prior)

    @property
    def n_actions(self):
        return self.sender_payoff.shape[1]


@dataclass
class ExactScheme:
    phi: np.ndarray  # (S, Sigma), rows sum to one

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if np.any(self.phi < -TOL) or np.any(np.abs(self.phi.sum(axis=1) - 1.0) > 1e-7):
            raise ValueError("scheme rows must be probability vectors")


def recommendation_letter_game():
    """States (weak, strong) with prior (2/3, 1/3); actions (no hire, hire)."""
    return TabularGame(
        prior=[2.0 / 3.0, 1.0 / 3.0],
        sender_payoff=[[0.0, 1.0], [0.0, 1.0]],
        receiver_payoff=[[0.0, -1.0], [0.0, 1.0]],
    )


def _lp_matrices(game):
    """x = phi(a|s) flattened row-major; returns (c, A_ub, b_ub, A_eq, b_eq)."""
    s_n, a_n = game.n_states, game.n_actions
    n = s_n * a_n
    c = (game.prior[:, None] * game.sender_payoff).ravel()
    rows = []
    for a, a2 in itertools.permutations(range(a_n), 2):
        row = np.zeros(n)
        for s in range(s_n):
            diff = game.receiver_payoff[s, a] - game.receiver_payoff[s, a2]
            row[s * a_n + a] = game.prior[s] * diff
        rows.append(-row)  # -obedience <= 0
    a_ub = np.array(rows).reshape(-1, n)
    a_eq = np.zeros((s_n, n))
    for s in range(s_n):
        a_eq[s, s * a_n:(s + 1) * a_n] = 1.0
    return c, a_ub, np.zeros(len(a_ub)), a_eq, np.ones(s_n)


def _vertex_enumeration(c, a_ub, b_ub, a_eq, b_eq):
    n = len(c)
    # Inequalities: obedience rows plus x >= 0 written as -x <= 0.
    ineq = np.vstack([a_ub, -np.eye(n)])
    ineq_b = np.concatenate([b_ub, np.zeros(n)])
    free = n - len(a_eq)
    best_x, best_val = None, -np.inf
    for active in itertools.combinations(range(len(ineq)), free):
        m = np.vstack([a_eq, ineq[list(active)]])
        rhs = np.concatenate([b_eq, ineq_b[list(active)]])
        if abs(np.linalg.det(m)) < 1e-12:
            continue
        x = np.linalg.solve(m, rhs)
        if np.any(ineq @ x - ineq_b > 1e-10):
            continue
        val = c @ x
        if val > best_val + 1e-12:
            best_x, best_val = x, val
    return best_x, best_val


def solve_persuasion_lp(game, max_vertex_combinations=200_000):
    """Optimal obedient direct scheme and the sender's value.

    Small problems are solved by enumerating basic feasible solutions;
    larger ones fall back to HiGHS through ``scipy.optimize.linprog``.
    """
    c, a_ub, b_ub, a_eq, b_eq = _lp_matrices(game)
    n = len(c)
    combos = math.comb(len(a_ub) + n, n - len(a_eq))
    if combos <= max_vertex_combinations:
        x, val = _vertex_enumeration(c, a_ub, b_ub, a_eq, b_eq)
    else:
        res = optimize.linprog(-c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                               bounds=[(0, None)] * n, method="highs")
        x, val = (res.x, -res.fun) if res.success else (None, None)
    if x is None:
        raise RuntimeError("persuasion LP infeasible; the uninformative scheme should always be feasible")
    phi = np.clip(x.reshape(game.n_states, game.n_actions), 0.0, None)
    phi /= phi.sum(axis=1, keepdims=True)
    return ExactScheme(phi), float(val)


def sender_value(game, scheme):
    """Sender payoff when the receiver obeys every recommendation."""
    phi = np.asarray(scheme.phi if isinstance(scheme, ExactScheme) else scheme)
    return float((game.prior[:, None] * phi * game.sender_payoff).sum())


@dataclass
class SignalReport:
    signal: int
    probability: float
    posterior: np.ndarray
    best_response: int
    follows: bool
    slack: float
    reachable: bool


def check_incentive_compatibility(game, scheme, tol=1e-12):
    """Per recommended action: posterior, best response and obedience slack.

    ``slack`` is min over a' of sum_s P(s) phi(a|s) (w^j(s,a) - w^j(s,a')),
    i.e. the tightest unnormalized obedience constraint.  At zero slack the
    receiver is taken to follow the recommendation.
    """
    phi = np.asarray(scheme.phi if isinstance(scheme, ExactScheme) else scheme)
    reports = []
    for a in range(phi.shape[1]):
        joint = game.prior * phi[:, a]
        mass = joint.sum()
        gains = [(joint * (game.receiver_payoff[:, a] - game.receiver_payoff[:, a2])).sum()
                 for a2 in range(game.n_actions) if a2 != a]
        slack = float(min(gains)) if gains else 0.0
        if mass <= 0:
            reports.append(SignalReport(a, 0.0, np.full(game.n_states, np.nan), a, True, slack, False))
            continue
        posterior = joint / mass
        expected = posterior @ game.receiver_payoff
        best = int(np.argmax(expected))
        if expected[a] >= expected[best] - tol:
            best = a
        reports.append(SignalReport(a, float(mass), posterior, best, best == a, slack, True))
    return reports


@dataclass
class TabularMSG:
    """Finite Markov signaling game.

    ``transition[s, a, s']``, rewards ``[s, a]``, deterministic emission
    ``obs_of_state[s]`` into ``n_obs`` observation classes.
    """

    initial: np.ndarray
    transition: np.ndarray
    reward_sender: np.ndarray
    reward_receiver: np.ndarray
    obs_of_state: np.ndarray
    n_obs: int = 1

    @property
    def n_states(self):
        return len(self.initial)


@dataclass
class MsgValues:
    v_sender: np.ndarray
    v_receiver: np.ndarray
    w_sender: np.ndarray
    w_receiver: np.ndarray
    occupancy: np.ndarray
    value_sender: float
    value_receiver: float


def recommendation_letter_msg():
    game = recommendation_letter_game()
    prior = game.prior
    transition = np.broadcast_to(prior, (2, 2, 2)).copy()
    return TabularMSG(prior.copy(), transition, game.sender_payoff, game.receiver_payoff,
                      np.zeros(2, dtype=int), 1)


def _as_msg(env):
    if isinstance(env, TabularMSG):
        return env
    if hasattr(env, "tabular"):
        return env.tabular()
    from msglab.env import RecommendationLetter
    if isinstance(env, RecommendationLetter):
        return recommendation_letter_msg()
    raise UnsupportedEnvError(f"{type(env).__name__} has no enumerable tabular form")


def exact_msg_value(env, scheme, policy, gamma):
    """Solve V = r_pi + gamma P_pi V for both players.

    ``scheme[s, sigma]``; ``policy[o, sigma, a]`` (or ``[sigma, a]`` when
    there is a single observation class).  The occupancy is the normalized
    discounted visitation sum_k gamma^k Pr(s0 -> s, k).
    """
    msg = _as_msg(env)
    phi = np.asarray(scheme.phi if isinstance(scheme, ExactScheme) else scheme, dtype=np.float64)
    pi = np.asarray(policy, dtype=np.float64)
    if pi.ndim == 2:
        pi = pi[None]
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    pi_s = pi[msg.obs_of_state]                              # (S, Sigma, A)
    act = np.einsum("sk,ska->sa", phi, pi_s)                 # Pr(a | s)
    p_pi = np.einsum("sa,sat->st", act, msg.transition)
    lhs = np.eye(msg.n_states) - gamma * p_pi
    r_i = (act * msg.reward_sender).sum(axis=1)
    r_j = (act * msg.reward_receiver).sum(axis=1)
    v_i = np.linalg.solve(lhs, r_i)
    v_j = np.linalg.solve(lhs, r_j)
    w_i = msg.reward_sender + gamma * msg.transition @ v_i
    w_j = msg.reward_receiver + gamma * msg.transition @ v_j
    h = np.linalg.solve(lhs.T, msg.initial)
    return MsgValues(v_i, v_j, w_i, w_j, h / h.sum(), float(msg.initial @ v_i),
                     float(msg.initial @ v_j))


def finite_difference_grad(f, x, step=1e-5):
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        hi = f(x)
        flat[i] = old - step
        lo = f(x)
        flat[i] = old
        gflat[i] = (hi - lo) / (2 * step)
    return grad


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def relaxed_state_value(logits, receiver_probs, payoff_row, temperature=1.0):
    """E over the relaxed binary signal of sum_a pi(a | x) * payoff_row[a].

    With two categories the relaxed sample is x1 = sigmoid((l1 - l0 + L) / tau),
    L ~ Logistic(0, 1); integrate over the logistic quantile u in (0, 1).
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape != (2,):
        raise ValueError("quadrature oracle supports exactly two signals")
    diff = logits[1] - logits[0]
    payoff_row = np.asarray(payoff_row, dtype=np.float64)

    def integrand(u):
        x1 = _sigmoid((diff + math.log(u / (1.0 - u))) / temperature)
        x = np.array([[1.0 - x1, x1]])
        return float(receiver_probs(x)[0] @ payoff_row)

    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def relaxed_sender_value(prior, scheme_logits, receiver_probs, sender_payoff, temperature=1.0):
    """Exact one-step sender value when the receiver acts on the relaxed signal."""
    scheme_logits = np.asarray(scheme_logits, dtype=np.float64)
    return float(sum(p * relaxed_state_value(scheme_logits[s], receiver_probs,
                                             sender_payoff[s], temperature)
                     for s, p in enumerate(prior)))


def monte_carlo_value_error(n_steps=200_000, seed=0):
    """|MC estimate - exact| of the sender value for a mixed scheme and policy on RecLetter."""
    rng = np.random.default_rng(seed)
    msg = recommendation_letter_msg()
    phi = np.array([[0.7, 0.3], [0.2, 0.8]])
    pi = np.array([[0.9, 0.1], [0.25, 0.75]])
    exact = exact_msg_value(msg, phi, pi, 0.0).value_sender
    s = (rng.random(n_steps) < msg.initial[1]).astype(int)
    sig = (rng.random(n_steps) < phi[s, 1]).astype(int)
    a = (rng.random(n_steps) < pi[sig, 1]).astype(int)
    return float(abs(msg.reward_sender[s, a].mean() - exact))


def signaling_gradient_check(n_steps=100_000, seed=0, temperature=1.0):
    """Relative L2 errors of the signaling and PG estimators against finite differences.

    Recommendation Letter, tabular scheme, frozen stochastic receiver acting
    on the relaxed signal.  With gamma = 0 the exact W^i(s, a) = w^i(s, a)
    and the exact V^i(s) baseline are used, so any gap is estimator bias or
    Monte-Carlo noise.  Both estimators share one sample.
    """
    from msglab.agents import ReceiverPolicy, SignalingScheme
    from msglab.learn.batch import Batch
    from msglab.learn.estimators import pg_signal_gradient, signaling_gradient

    game = recommendation_letter_game()
    eta = np.array([[0.2, -0.4], [-0.3, 0.9]])
    theta = np.array([[1.5, -1.0], [-2.0, 2.5]])
    scheme = SignalingScheme(2, 2, None, temperature, hard=False)
    scheme.net.set_flat(eta.ravel())
    policy = ReceiverPolicy(0, 2, 2, None)
    policy.net.set_flat(theta.ravel())

    def probs(x):
        return policy.distribution(np.zeros((len(x), 0)), x)

    def value(e):
        return relaxed_sender_value(game.prior, e, probs, game.sender_payoff, temperature)

    fd = finite_difference_grad(value, eta, 1e-5).ravel()
    v_state = np.array([relaxed_state_value(eta[s], probs, game.sender_payoff[s], temperature)
                        for s in range(2)])

    rng = np.random.default_rng(seed)
    s = (rng.random(n_steps) < game.prior[1]).astype(int)
    states = np.eye(2)[s]
    sig = scheme.sample(states, rng)
    a = policy.sample(np.zeros((n_steps, 0)), sig.soft, rng)
    weights = game.sender_payoff[s, a] - v_state[s]
    batch = Batch(states, np.zeros((n_steps, 0)), sig.index, sig.noise, sig.soft, a,
                  game.sender_payoff[s, a], game.receiver_payoff[s, a], states,
                  np.ones(n_steps, bool), np.zeros(n_steps, int), np.arange(n_steps), 2)
    batch.compute_returns()
    sg = signaling_gradient(scheme, policy, None, batch, advantage=False, w_values=weights)
    pg = pg_signal_gradient(scheme, None, batch, q_values=weights, advantage=False)
    norm = np.linalg.norm(fd)
    return float(np.linalg.norm(sg - fd) / norm), float(np.linalg.norm(pg - fd) / norm)
