"""Sender and receiver networks built on ``msglab.autodiff``.

Two parameterizations are used:

* tabular: a single bias-free linear layer on one-hot inputs, i.e. one
  logit row per input category;
* mlp: one tanh hidden layer.
"""

import enum
import struct
from dataclasses import dataclass

import numpy as np

from msglab.autodiff import (Tensor, concat, conditional_gumbel_softmax, draw_uniforms,
                             one_hot, parameter, straight_through)


class Network:
    """Tabular (``hidden=None``) or one-hidden-layer tanh MLP."""

    def __init__(self, in_dim, out_dim, hidden=None, rng=None, init_scale=0.01):
        rng = np.random.default_rng() if rng is None else rng
        self.in_dim, self.out_dim, self.hidden = in_dim, out_dim, hidden
        if hidden is None:
            self.params = [parameter(init_scale * rng.standard_normal((in_dim, out_dim)))]
        else:
            w1 = rng.standard_normal((in_dim, hidden)) / np.sqrt(max(in_dim, 1))
            self.params = [
                parameter(w1),
                parameter(np.zeros(hidden)),
                parameter(init_scale * rng.standard_normal((hidden, out_dim))),
                parameter(np.zeros(out_dim)),
            ]

    def __call__(self, x):
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"input dim {x.shape[-1]} != network input dim {self.in_dim}")
        if self.hidden is None:
            return x @ self.params[0]
        w1, b1, w2, b2 = self.params
        return (x @ w1 + b1).tanh() @ w2 + b2

    def forward_numpy(self, x):
        """Graph-free forward pass used during rollouts."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"input dim {x.shape[-1]} != network input dim {self.in_dim}")
        if self.hidden is None:
            return x @ self.params[0].values
        w1, b1, w2, b2 = (p.values for p in self.params)
        return np.tanh(x @ w1 + b1) @ w2 + b2

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def get_flat(self):
        return np.concatenate([p.values.ravel() for p in self.params])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        offset = 0
        for p in self.params:
            n = p.values.size
            p.values = flat[offset:offset + n].reshape(p.shape).copy()
            offset += n
        if offset != flat.size:
            raise ValueError("flat parameter vector has the wrong length")

    def grad_flat(self):
        return np.concatenate([
            (np.zeros(p.values.size) if p.grad is None else p.grad.ravel()) for p in self.params
        ])

    def copy_from(self, other):
        self.set_flat(other.get_flat())


def _rows(x, dim):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None]
    if x.shape[-1] != dim:
        raise ValueError(f"expected rows of width {dim}, got {x.shape}")
    return x


def _softmax(logits):
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class SignalBatch:
    index: np.ndarray       # (n,) sampled categories
    one_hot: np.ndarray     # (n, K)
    soft: np.ndarray        # (n, K) relaxed sample values
    noise: np.ndarray       # (n, K) uniforms behind ``soft``


class SignalingScheme:
    """Sender's state-to-signal distribution.

    Signals are sampled exactly from softmax(logits); the relaxed sample
    handed to the receiver's gradient path is drawn conditionally on the
    sampled category, so it can be rebuilt from the stored uniforms.
    """

    def __init__(self, state_dim, signal_count, hidden=None, temperature=1.0, hard=True, rng=None):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.net = Network(state_dim, signal_count, hidden, rng)
        self.signal_count = signal_count
        self.temperature = float(temperature)
        self.hard = bool(hard)

    @property
    def params(self):
        return self.net.params

    def logits(self, states):
        return self.net(states)

    def distribution(self, states):
        states = np.atleast_2d(states)
        return _softmax(self.net.forward_numpy(states))

    def sample(self, states, rng):
        states = np.atleast_2d(states)
        probs = self.distribution(states)
        # Gumbel-max draw of the category; ``noise`` feeds the relaxation.
        g = -np.log(-np.log(draw_uniforms(probs.shape, rng)))
        index = np.argmax(np.log(probs) + g, axis=-1)
        noise = draw_uniforms(probs.shape, rng)
        logits = self.net.forward_numpy(states)
        soft = conditional_gumbel_softmax(logits, index, self.temperature, uniforms=noise).values
        return SignalBatch(index, one_hot(index, self.signal_count), soft, noise)

    def relaxed_signal(self, states, index, noise, hard=None):
        """Rebuild the differentiable signal for stored samples.

        Returns a tensor whose forward value is the one-hot signal (hard)
        or the relaxed sample (soft) and whose gradient reaches the scheme
        parameters through the relaxation.
        """
        if noise is None:
            raise ValueError("signal noise missing: the soft signal pathway cannot be rebuilt")
        hard = self.hard if hard is None else hard
        soft = conditional_gumbel_softmax(self.logits(states), index, self.temperature,
                                          uniforms=noise)
        if not hard:
            return soft
        return straight_through(one_hot(index, self.signal_count), soft)


class ReceiverPolicy:
    """pi(a | o, sigma) on the concatenated (observation, signal) input."""

    def __init__(self, obs_dim, signal_count, action_count, hidden=None, rng=None):
        self.obs_dim, self.signal_count, self.action_count = obs_dim, signal_count, action_count
        self.net = Network(obs_dim + signal_count, action_count, hidden, rng)

    @property
    def params(self):
        return self.net.params

    def _input(self, obs, signal):
        if isinstance(signal, Tensor) or isinstance(obs, Tensor):
            if self.obs_dim == 0:
                return signal if isinstance(signal, Tensor) else Tensor(signal)
            return concat([obs, signal], axis=-1)
        signal = np.atleast_2d(signal)
        if self.obs_dim == 0:
            return signal
        return np.concatenate([_rows(obs, self.obs_dim), signal], axis=-1)

    def logits(self, obs, signal):
        return self.net(self._input(obs, signal))

    def log_probs(self, obs, signal):
        return self.logits(obs, signal).log_softmax()

    def distribution(self, obs, signal):
        x = self._input(obs, signal)
        return _softmax(self.net.forward_numpy(x))

    def sample(self, obs, signal, rng):
        probs = self.distribution(obs, signal)
        u = rng.random((len(probs), 1))
        return np.minimum((probs.cumsum(axis=1) < u).sum(axis=1), self.action_count - 1)

    def all_signal_distributions(self, obs):
        """pi(. | o_t, e_sigma) for every signal: shape (n, K, |A|)."""
        obs = _rows(obs, self.obs_dim)
        n, k = len(obs), self.signal_count
        eye = np.eye(k)
        x = np.concatenate([np.repeat(obs, k, axis=0), np.tile(eye, (n, 1))], axis=1)
        return _softmax(self.net.forward_numpy(x)).reshape(n, k, self.action_count)


class CriticKind(enum.Enum):
    RECEIVER_V = "receiver_v"     # V^j(o, sigma)
    RECEIVER_Q = "receiver_q"     # Q^j(o, sigma, .), used by DIAL
    SENDER_W_I = "sender_w_i"     # W^i(s, .)
    SENDER_W_J = "sender_w_j"     # W^j(s, .)
    SENDER_V_I = "sender_v_i"     # V^i(s)


class Critic:
    """Value estimator with a hard-synced target copy.

    Action-conditioned kinds output one value per action.
    """

    def __init__(self, kind, in_dim, action_count=1, hidden=None, rng=None, sync_every=50):
        self.kind = CriticKind(kind)
        self.per_action = self.kind in (CriticKind.RECEIVER_Q, CriticKind.SENDER_W_I,
                                        CriticKind.SENDER_W_J)
        self.out_dim = action_count if self.per_action else 1
        self.net = Network(in_dim, self.out_dim, hidden, rng, init_scale=0.0)
        self.target = Network(in_dim, self.out_dim, hidden, rng, init_scale=0.0)
        self.target.copy_from(self.net)
        self.sync_every = int(sync_every)
        self.updates = 0

    @property
    def params(self):
        return self.net.params

    def __call__(self, x, actions=None):
        out = self.net(x)
        if actions is not None:
            return out.gather(actions)
        return out if self.per_action else out.reshape(-1)

    def evaluate(self, x, actions=None, target=False):
        """Graph-free estimate; per-action kinds pick ``actions`` when given."""
        out = (self.target if target else self.net).forward_numpy(np.atleast_2d(x))
        if actions is not None:
            return out[np.arange(len(out)), np.asarray(actions)]
        return out if self.per_action else out[:, 0]

    def after_update(self):
        self.updates += 1
        if self.updates % self.sync_every == 0:
            self.sync()

    def sync(self):
        self.target.copy_from(self.net)


class Adam:
    """Adam on a list of Tensor parameters; ``step`` descends their grads."""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, grads=None):
        if grads is None:
            grads = [np.zeros_like(p.values) if p.grad is None else p.grad for p in self.params]
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.values = p.values - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


_MAGIC = b"MSGP"


def save_params(path, networks, env_id, seed):
    """Write networks as float64 arrays after a small header.

    Header: magic, env id (length-prefixed utf-8), seed, network count,
    then per network (in_dim, out_dim, hidden or 0, length).
    """
    env_bytes = env_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(env_bytes)))
        fh.write(env_bytes)
        fh.write(struct.pack("<qI", int(seed), len(networks)))
        flats = [net.get_flat() for net in networks]
        for net, flat in zip(networks, flats):
            fh.write(struct.pack("<IIII", net.in_dim, net.out_dim, net.hidden or 0, flat.size))
        for flat in flats:
            fh.write(flat.astype("<f8").tobytes())


def load_params(path, networks):
    """Load into ``networks`` (dims must match); returns (env_id, seed)."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a parameter file")
        (n_env,) = struct.unpack("<I", fh.read(4))
        env_id = fh.read(n_env).decode("utf-8")
        seed, count = struct.unpack("<qI", fh.read(12))
        if count != len(networks):
            raise ValueError(f"{path}: holds {count} networks, expected {len(networks)}")
        headers = [struct.unpack("<IIII", fh.read(16)) for _ in range(count)]
        for net, (in_dim, out_dim, hidden, size) in zip(networks, headers):
            if (in_dim, out_dim, hidden) != (net.in_dim, net.out_dim, net.hidden or 0):
                raise ValueError(f"{path}: network shape mismatch")
            net.set_flat(np.frombuffer(fh.read(8 * size), dtype="<f8"))
    return env_id, seed
