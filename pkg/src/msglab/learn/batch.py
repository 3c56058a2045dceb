"""Rollout storage and discounted returns."""

from dataclasses import dataclass

import numpy as np

from msglab.env import (Action, MsgState, Observation, Signal, Trajectory, Transition)


def discounted_returns(rewards, gamma, dones=None):
    """G_t = r_t + gamma * G_{t+1}, with G = 0 after a terminal step.

    ``rewards`` has shape (T,) or (T, n_episodes) with time first.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.zeros_like(rewards)
    running = np.zeros(rewards.shape[1:])
    for t in range(len(rewards) - 1, -1, -1):
        if dones is not None:
            running = np.where(dones[t], 0.0, running)
        running = rewards[t] + gamma * running
        out[t] = running
    return out


@dataclass
class Batch:
    """Flat arrays of transitions, episode-major (each episode contiguous)."""

    states: np.ndarray        # (N, state_dim) encodings
    obs: np.ndarray           # (N, obs_dim)
    signal_index: np.ndarray  # (N,)
    signal_noise: np.ndarray  # (N, K) uniforms behind the relaxed signal, or None
    signal_soft: np.ndarray   # (N, K)
    actions: np.ndarray       # (N,)
    reward_sender: np.ndarray
    reward_receiver: np.ndarray
    next_states: np.ndarray
    done: np.ndarray
    step_index: np.ndarray
    episode: np.ndarray
    signal_count: int
    gamma: float = 0.0
    returns_sender: np.ndarray = None
    returns_receiver: np.ndarray = None

    def __len__(self):
        return len(self.actions)

    @property
    def signal_one_hot(self):
        return np.eye(self.signal_count)[self.signal_index]

    @property
    def episode_count(self):
        return int(self.episode.max()) + 1 if len(self) else 0

    def compute_returns(self, gamma=None):
        if gamma is not None:
            self.gamma = gamma
        self.returns_sender = np.zeros(len(self))
        self.returns_receiver = np.zeros(len(self))
        for ep in np.unique(self.episode):
            idx = np.flatnonzero(self.episode == ep)
            self.returns_sender[idx] = discounted_returns(self.reward_sender[idx], self.gamma)
            self.returns_receiver[idx] = discounted_returns(self.reward_receiver[idx], self.gamma)
        return self

    def episode_returns(self):
        """Undiscounted (sender, receiver) return of each episode."""
        n = self.episode_count
        r_i = np.bincount(self.episode, weights=self.reward_sender, minlength=n)
        r_j = np.bincount(self.episode, weights=self.reward_receiver, minlength=n)
        return r_i, r_j

    @classmethod
    def from_trajectories(cls, trajectories, signal_count, gamma=0.0):
        rows = []
        for ep, traj in enumerate(trajectories):
            if len(traj) == 0:
                raise ValueError("empty trajectory")
            for tr in traj:
                rows.append((ep, tr))
        if not rows:
            raise ValueError("empty trajectory")
        noise = [tr.signal_noise for _, tr in rows]
        batch = cls(
            states=np.array([tr.state.encoding for _, tr in rows], dtype=float),
            obs=np.array([tr.observation.encoding for _, tr in rows], dtype=float).reshape(len(rows), -1),
            signal_index=np.array([tr.signal.category_index for _, tr in rows]),
            signal_noise=None if any(n is None for n in noise) else np.array(noise),
            signal_soft=np.array([tr.signal_soft_probs for _, tr in rows], dtype=float),
            actions=np.array([tr.action.category_index for _, tr in rows]),
            reward_sender=np.array([tr.reward_sender for _, tr in rows], dtype=float),
            reward_receiver=np.array([tr.reward_receiver for _, tr in rows], dtype=float),
            next_states=np.array([tr.next_state.encoding for _, tr in rows], dtype=float),
            done=np.array([tr.done for _, tr in rows]),
            step_index=np.array([tr.state.step_index for _, tr in rows]),
            episode=np.array([ep for ep, _ in rows]),
            signal_count=signal_count,
            gamma=gamma,
        )
        return batch.compute_returns()

    def trajectories(self):
        eye = np.eye(self.signal_count)
        out = []
        for ep in np.unique(self.episode):
            traj = Trajectory()
            for i in np.flatnonzero(self.episode == ep):
                traj.transitions.append(Transition(
                    state=MsgState(self.states[i], int(self.step_index[i])),
                    observation=Observation(self.obs[i]),
                    signal=Signal(int(self.signal_index[i]), eye[self.signal_index[i]]),
                    signal_soft_probs=self.signal_soft[i],
                    action=Action(int(self.actions[i])),
                    reward_sender=float(self.reward_sender[i]),
                    reward_receiver=float(self.reward_receiver[i]),
                    next_state=MsgState(self.next_states[i], int(self.step_index[i]) + 1),
                    done=bool(self.done[i]),
                    signal_noise=None if self.signal_noise is None else self.signal_noise[i],
                ))
            out.append(traj)
        return out


def as_batch(data, signal_count=None, gamma=0.0):
    if isinstance(data, Batch):
        if data.returns_sender is None:
            data.compute_returns()
        return data
    if isinstance(data, Trajectory):
        data = [data]
    if signal_count is None:
        signal_count = len(data[0].transitions[0].signal.one_hot)
    return Batch.from_trajectories(data, signal_count, gamma)


def rollout(env, scheme, policy, n_episodes, rng, gamma=0.0):
    """Run ``n_episodes`` fixed-horizon episodes in lockstep."""
    spaces = env.spaces()
    horizon, k = spaces.horizon, spaces.signal_count
    raw = env.reset_batch(n_episodes)
    cols = {name: [] for name in ("states", "obs", "index", "noise", "soft", "actions",
                                  "r_i", "r_j", "next")}
    for _ in range(horizon):
        enc = env.encode_batch(raw)
        obs = env.observe_batch(raw)
        sig = scheme.sample(enc, rng)
        received = sig.one_hot if scheme.hard else sig.soft
        actions = policy.sample(obs, received, rng)
        raw, r_i, r_j = env.step_batch(raw, actions)
        for name, value in (("states", enc), ("obs", obs), ("index", sig.index),
                            ("noise", sig.noise), ("soft", sig.soft), ("actions", actions),
                            ("r_i", r_i), ("r_j", r_j), ("next", env.encode_batch(raw))):
            cols[name].append(value)

    def flat(name):
        # (T, E, ...) -> (E*T, ...), episode-major
        arr = np.stack(cols[name], axis=0)
        arr = np.swapaxes(arr, 0, 1)
        return arr.reshape((n_episodes * horizon,) + arr.shape[2:])

    steps = np.tile(np.arange(horizon), n_episodes)
    batch = Batch(
        states=flat("states"), obs=flat("obs"), signal_index=flat("index"),
        signal_noise=flat("noise"), signal_soft=flat("soft"), actions=flat("actions"),
        reward_sender=flat("r_i"), reward_receiver=flat("r_j"), next_states=flat("next"),
        done=steps == horizon - 1, step_index=steps,
        episode=np.repeat(np.arange(n_episodes), horizon), signal_count=k, gamma=gamma,
    )
    return batch.compute_returns()
