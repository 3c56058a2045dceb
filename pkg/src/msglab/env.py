"""Markov signaling game environments.

Each step the sender sees the full state, the receiver sees an emission
of it plus the sender's signal, and rewards depend only on (state,
action).  Two games are provided:

* ``RecommendationLetter``: a stream of i.i.d. students, strong with
  probability 1/3; the receiver (HR) decides whether to hire.
* ``ReachingGoals``: an n x n grid where the receiver walks towards
  apples; the sender is paid for red apples, the receiver for green ones.

Both expose a single-episode API (``reset``/``observe``/``step``) built on
batched array methods that the trainer uses directly.
"""

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class ObsMode(enum.Enum):
    NO_OBS = "no"
    POS_OBS = "pos"
    FULL_OBS = "full"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"no": "no", "noobs": "no", "no-obs": "no", "pos": "pos", "posobs": "pos",
                   "pos-obs": "pos", "full": "full", "fullobs": "full", "full-obs": "full"}
        try:
            return cls(aliases[str(value).lower()])
        except KeyError:
            raise ValueError(f"unknown obs mode {value!r}") from None


class EnvSpaces(NamedTuple):
    state_dim: int
    obs_dim: int
    signal_count: int
    action_count: int
    horizon: int


@dataclass
class MsgState:
    encoding: np.ndarray
    step_index: int = 0


@dataclass
class Observation:
    encoding: np.ndarray


@dataclass
class Signal:
    category_index: int
    one_hot: np.ndarray


@dataclass
class Action:
    category_index: int


@dataclass
class Transition:
    state: MsgState
    observation: Observation
    signal: Signal
    signal_soft_probs: np.ndarray
    action: Action
    reward_sender: float
    reward_receiver: float
    next_state: MsgState
    done: bool
    # Uniforms behind the relaxed signal; lets the soft pathway be rebuilt.
    signal_noise: np.ndarray = None


@dataclass
class Trajectory:
    transitions: list = field(default_factory=list)

    def __len__(self):
        return len(self.transitions)

    def __iter__(self):
        return iter(self.transitions)

    def validate(self):
        steps = [t.state.step_index for t in self.transitions]
        if steps != list(range(steps[0], steps[0] + len(steps))):
            raise ValueError(f"non-contiguous step indices {steps}")
        if any(t.done for t in self.transitions[:-1]):
            raise ValueError("terminal flag before the last transition")
        for t in self.transitions:
            if not (np.isfinite(t.reward_sender) and np.isfinite(t.reward_receiver)):
                raise ValueError("non-finite reward")


class MarkovSignalingGame:
    """Shared single-episode API; subclasses implement the batched core."""

    name = "msg"

    def __init__(self, seed=None):
        self.rng = np.random.default_rng(seed)

    # batched core: states are integer arrays, one row per parallel episode
    def reset_batch(self, n):
        raise NotImplementedError

    def encode_batch(self, states):
        raise NotImplementedError

    def observe_batch(self, states, obs_mode=None):
        raise NotImplementedError

    def step_batch(self, states, actions):
        raise NotImplementedError

    def decode(self, encoding):
        raise NotImplementedError

    def spaces(self):
        raise NotImplementedError

    # single-episode API
    def reset(self, seed=None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        raw = self.reset_batch(1)
        return MsgState(self.encode_batch(raw)[0], 0)

    def observe(self, state, obs_mode=None):
        raw = self.decode(state.encoding)[None]
        return Observation(self.observe_batch(raw, obs_mode)[0])

    def step(self, state, action):
        if isinstance(action, Action):
            action = action.category_index
        action = int(action)
        if not 0 <= action < self.spaces().action_count:
            raise ValueError(f"invalid action index {action}")
        raw = self.decode(state.encoding)[None]
        nxt, r_i, r_j = self.step_batch(raw, np.array([action]))
        step_index = state.step_index + 1
        done = step_index >= self.spaces().horizon
        return MsgState(self.encode_batch(nxt)[0], step_index), float(r_i[0]), float(r_j[0]), done


class RecommendationLetter(MarkovSignalingGame):
    """Professor (sender) writes letters, HR (receiver) hires or not.

    State index 0 is a weak student, 1 a strong one.  Action 1 hires.
    """

    name = "recletter"
    WEAK, STRONG = 0, 1
    NO_HIRE, HIRE = 0, 1

    def __init__(self, stream_length=1, p_strong=1.0 / 3.0, seed=None):
        super().__init__(seed)
        if stream_length < 1:
            raise ValueError("stream_length must be >= 1")
        self.stream_length = int(stream_length)
        self.p_strong = float(p_strong)

    @property
    def prior(self):
        return np.array([1.0 - self.p_strong, self.p_strong])

    def spaces(self):
        return EnvSpaces(2, 0, 2, 2, self.stream_length)

    def reset_batch(self, n):
        return (self.rng.random(n) < self.p_strong).astype(np.int64)

    def encode_batch(self, states):
        return np.eye(2)[states]

    def decode(self, encoding):
        return np.int64(np.argmax(encoding))

    def observe_batch(self, states, obs_mode=None):
        return np.zeros((len(states), 0))

    def step_batch(self, states, actions):
        actions = np.asarray(actions)
        if np.any((actions < 0) | (actions > 1)):
            raise ValueError("invalid action index")
        hire = actions == self.HIRE
        r_i = hire.astype(float)
        r_j = np.where(hire, np.where(states == self.STRONG, 1.0, -1.0), 0.0)
        return self.reset_batch(len(states)), r_i, r_j

    def payoff_tables(self):
        """(sender, receiver) payoff matrices indexed [state, action]."""
        w_i = np.array([[0.0, 1.0], [0.0, 1.0]])
        w_j = np.array([[0.0, -1.0], [0.0, 1.0]])
        return w_i, w_j


class ReachingGoals(MarkovSignalingGame):
    """Grid world with one red (sender) and one green (receiver) apple.

    Raw state rows are (receiver cell, red cell, green cell) with cells in
    row-major order.  The encoding stacks three one-hot n*n channels.
    """

    name = "goals"
    MOVES = np.array([[-1, 0], [1, 0], [0, -1], [0, 1]])  # up, down, left, right
    DEFAULT_SCALES = {3: (20.0, 5.0), 5: (12.0, 3.5)}

    def __init__(self, size=3, obs_mode=ObsMode.POS_OBS, horizon=50,
                 reach_reward=None, penalty_scale=None, seed=None):
        super().__init__(seed)
        if size < 2:
            raise ValueError("map size must be >= 2")
        self.size = int(size)
        self.cells = self.size * self.size
        self.obs_mode = ObsMode.parse(obs_mode)
        self.horizon = int(horizon)
        default_reach, default_pen = self.DEFAULT_SCALES.get(self.size, (20.0, 5.0))
        self.reach_reward = default_reach if reach_reward is None else float(reach_reward)
        self.penalty_scale = default_pen if penalty_scale is None else float(penalty_scale)

    def spaces(self):
        obs_dim = 2 * self.cells if self.obs_mode is ObsMode.FULL_OBS else self.cells
        return EnvSpaces(3 * self.cells, obs_dim, self.cells, 4, self.horizon)

    def _cells_except(self, occupied):
        # Uniform over cells != occupied, per row.
        draw = self.rng.integers(0, self.cells - 1, size=len(occupied))
        return draw + (draw >= occupied)

    def reset_batch(self, n):
        pos = self.rng.integers(0, self.cells, size=n)
        red = self._cells_except(pos)
        green = self._cells_except(pos)
        return np.stack([pos, red, green], axis=1)

    def encode_batch(self, states):
        n = len(states)
        out = np.zeros((n, 3, self.cells))
        rows = np.arange(n)
        for ch in range(3):
            out[rows, ch, states[:, ch]] = 1.0
        return out.reshape(n, 3 * self.cells)

    def decode(self, encoding):
        return np.asarray(encoding).reshape(3, self.cells).argmax(axis=1)

    def observe_batch(self, states, obs_mode=None):
        mode = self.obs_mode if obs_mode is None else ObsMode.parse(obs_mode)
        n = len(states)
        rows = np.arange(n)
        pos = np.zeros((n, self.cells))
        if mode is ObsMode.NO_OBS:
            return pos
        pos[rows, states[:, 0]] = 1.0
        if mode is ObsMode.POS_OBS:
            return pos
        green = np.zeros((n, self.cells))
        green[rows, states[:, 2]] = 1.0
        return np.concatenate([pos, green], axis=1)

    def distance(self, a, b):
        ra, ca = np.divmod(a, self.size)
        rb, cb = np.divmod(b, self.size)
        return np.abs(ra - rb) + np.abs(ca - cb)

    def step_batch(self, states, actions):
        actions = np.asarray(actions)
        if np.any((actions < 0) | (actions > 3)):
            raise ValueError("invalid action index")
        pos, red, green = states[:, 0], states[:, 1].copy(), states[:, 2].copy()
        row, col = np.divmod(pos, self.size)
        move = self.MOVES[actions]
        row = np.clip(row + move[:, 0], 0, self.size - 1)
        col = np.clip(col + move[:, 1], 0, self.size - 1)
        pos = row * self.size + col

        got_red = pos == red
        got_green = pos == green
        r_i = self.reach_reward * got_red
        r_j = self.reach_reward * got_green
        if got_red.any():
            red[got_red] = self._cells_except(pos[got_red])
        if got_green.any():
            green[got_green] = self._cells_except(pos[got_green])

        diameter = 2.0 * (self.size - 1)
        r_i = r_i - self.penalty_scale * self.distance(pos, red) / diameter
        r_j = r_j - self.penalty_scale * self.distance(pos, green) / diameter
        return np.stack([pos, red, green], axis=1), r_i, r_j


def make_env(name, seed=None, obs_mode="pos", stream_length=1):
    name = name.lower()
    if name == "recletter":
        return RecommendationLetter(stream_length=stream_length, seed=seed)
    if name in ("goals3", "goals5"):
        return ReachingGoals(size=int(name[-1]), obs_mode=obs_mode, seed=seed)
    raise ValueError(f"unknown environment {name!r}")
