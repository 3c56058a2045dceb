"""Training loop shared by all sender algorithms."""

import time
from dataclasses import dataclass

import numpy as np

from msglab.agents import Adam, Critic, CriticKind, ReceiverPolicy, SignalingScheme
from msglab.config import Algorithm
from msglab.env import RecommendationLetter, make_env
from msglab.learn.batch import rollout
from msglab.learn.estimators import (SenderCritics, constraint_matrix, honesty, pg_surrogate,
                                     sample_constraint_pairs, signaling_surrogate)
from msglab.learn.updates import (LagrangeConfig, Multipliers, constrained_sender_update,
                                  dial_update, receiver_a2c_update, receiver_input, regress)


@dataclass
class MetricsRow:
    seed: int
    episode_index: int
    reward_sender: float
    reward_receiver: float
    social_welfare: float
    honesty: float
    min_constraint_slack: float
    wallclock: float

    FIELDS = ("seed", "episode_index", "reward_sender", "reward_receiver", "social_welfare",
              "honesty", "min_constraint_slack", "wallclock")

    def as_tuple(self):
        return tuple(getattr(self, f) for f in self.FIELDS)


class Agents:
    """Sender, receiver, critics and their optimizers for one run."""

    def __init__(self, env, cfg, rng):
        sp = env.spaces()
        hidden = cfg.hidden_size
        self.scheme = SignalingScheme(sp.state_dim, sp.signal_count, hidden, cfg.temperature,
                                      cfg.hard_signals, rng)
        self.policy = ReceiverPolicy(sp.obs_dim, sp.signal_count, sp.action_count, hidden, rng)
        recv_in = sp.obs_dim + sp.signal_count

        def critic(kind, in_dim, actions=1):
            return Critic(kind, in_dim, actions, hidden, rng, cfg.target_sync)

        self.receiver_v = critic(CriticKind.RECEIVER_V, recv_in)
        self.receiver_q = critic(CriticKind.RECEIVER_Q, recv_in, sp.action_count)
        self.sender = SenderCritics(
            w_i=critic(CriticKind.SENDER_W_I, sp.state_dim, sp.action_count),
            v_i=critic(CriticKind.SENDER_V_I, sp.state_dim),
            w_j=critic(CriticKind.SENDER_W_J, sp.state_dim, sp.action_count),
        )
        self.opt_scheme = Adam(self.scheme.params, cfg.lr_sender)
        self.opt_policy = Adam(self.policy.params, cfg.lr_receiver)
        self.opt_critics = {
            name: Adam(c.params, cfg.lr_critic)
            for name, c in (("receiver_v", self.receiver_v), ("receiver_q", self.receiver_q),
                            ("w_i", self.sender.w_i), ("v_i", self.sender.v_i),
                            ("w_j", self.sender.w_j))
        }
        self.multipliers = Multipliers.zeros(sp.signal_count)

    def networks(self):
        return [self.scheme.net, self.policy.net, self.receiver_v.net, self.receiver_q.net,
                self.sender.w_i.net, self.sender.v_i.net, self.sender.w_j.net]


def seed_streams(seed):
    """Independent generators: env, parameter init, sampling, constraint pairs."""
    env_ss, init_ss, sample_ss, pair_ss = np.random.SeedSequence(seed).spawn(4)
    return (np.random.default_rng(env_ss), np.random.default_rng(init_ss),
            np.random.default_rng(sample_ss), np.random.default_rng(pair_ss))


def honesty_states(env, batch, rng, limit=64):
    if isinstance(env, RecommendationLetter):
        return np.eye(2)
    states = np.unique(batch.states, axis=0)
    if len(states) > limit:
        states = states[rng.choice(len(states), size=limit, replace=False)]
    return states


def update_critics(agents, batch):
    regress(agents.sender.w_i, agents.opt_critics["w_i"], batch.states, batch.returns_sender,
            batch.actions)
    regress(agents.sender.v_i, agents.opt_critics["v_i"], batch.states, batch.returns_sender)
    regress(agents.sender.w_j, agents.opt_critics["w_j"], batch.states, batch.returns_receiver,
            batch.actions)


def sender_step(algorithm, agents, batch, lagrange, pairs, c):
    """One sender update; returns nothing, mutates the scheme (and duals)."""
    scheme = agents.scheme
    if algorithm is Algorithm.FROZEN:
        return
    if algorithm is Algorithm.DIAL:
        regress(agents.receiver_q, agents.opt_critics["receiver_q"], receiver_input(batch),
                batch.returns_receiver, batch.actions)
        dial_update(scheme, agents.opt_scheme, agents.receiver_q, batch)
        return
    if algorithm in (Algorithm.PG, Algorithm.PGOC):
        objective = pg_surrogate(scheme, batch, agents.sender)
    else:
        objective = signaling_surrogate(scheme, agents.policy, batch, agents.sender)
    if algorithm.constrained:
        constrained_sender_update(scheme, agents.opt_scheme, objective, lagrange, c, pairs,
                                  agents.multipliers)
    else:
        constrained_sender_update(scheme, agents.opt_scheme, objective, lagrange)


def train(algorithm, env, cfg, seed, agents=None):
    """Yield a ``MetricsRow`` every ``cfg.eval_interval`` episodes.

    Each iteration samples ``cfg.batch_size`` episodes, refits the critics,
    updates the sender per ``algorithm`` and then the receiver (A2C).
    """
    algorithm = Algorithm(algorithm) if isinstance(algorithm, str) else algorithm
    cfg.validate()
    if isinstance(env, str):
        env = make_env(env, obs_mode=cfg.obs_mode, stream_length=cfg.stream_length)
    env_rng, init_rng, sample_rng, pair_rng = seed_streams(seed)
    env.rng = env_rng
    agents = agents or Agents(env, cfg, init_rng)
    lagrange = LagrangeConfig(cfg.lam, cfg.epsilon, cfg.lagrange_mode, cfg.lr_multiplier)
    k = env.spaces().signal_count

    start = time.perf_counter()
    episodes = 0
    next_eval = cfg.eval_interval
    window_i, window_j = [], []
    last_honesty, last_slack = 0.0, 0.0
    while episodes < cfg.total_episodes:
        n = min(cfg.batch_size, cfg.total_episodes - episodes)
        batch = rollout(env, agents.scheme, agents.policy, n, sample_rng, cfg.gamma)
        update_critics(agents, batch)

        # The constraint matrix is computed for every algorithm so the slack
        # metric is comparable and the pair stream is consumed identically.
        c = constraint_matrix(agents.scheme, agents.policy, batch, agents.sender.w_j)
        pairs = sample_constraint_pairs(batch.signal_index, k, cfg.constraint_samples, pair_rng)
        off = ~np.eye(k, dtype=bool)
        last_slack = float(c.values[off].min())

        sender_step(algorithm, agents, batch, lagrange, pairs, c)
        receiver_a2c_update(agents.policy, agents.receiver_v, batch, optimizer=agents.opt_policy,
                            critic_optimizer=agents.opt_critics["receiver_v"],
                            entropy_coef=cfg.entropy_coef)

        r_i, r_j = batch.episode_returns()
        window_i.extend(r_i)
        window_j.extend(r_j)
        episodes += n
        if episodes >= next_eval or episodes >= cfg.total_episodes:
            last_honesty = honesty(agents.scheme, honesty_states(env, batch, pair_rng))
            mean_i, mean_j = float(np.mean(window_i)), float(np.mean(window_j))
            wall = time.perf_counter() - start if cfg.record_wallclock else 0.0
            yield MetricsRow(seed, episodes, mean_i, mean_j, mean_i + mean_j, last_honesty,
                             last_slack, wall)
            window_i, window_j = [], []
            while next_eval <= episodes:
                next_eval += cfg.eval_interval
