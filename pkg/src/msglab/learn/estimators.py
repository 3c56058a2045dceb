"""Sender-side gradient estimators.

Each estimator is built as a scalar surrogate whose gradient with respect
to the scheme parameters is the estimate; ``*_gradient`` helpers run the
backward pass and return the flat gradient.
"""

from dataclasses import dataclass

import numpy as np

from msglab.autodiff import Tensor, backward
from msglab.learn.batch import as_batch


@dataclass
class SenderCritics:
    """Sender-side value estimates; any of them may be missing."""

    w_i: object = None   # W^i(s, .)
    v_i: object = None   # V^i(s)
    w_j: object = None   # W^j(s, .)


def flat_grad(surrogate, params):
    """Gradient of ``surrogate`` w.r.t. ``params`` without leaving grads behind."""
    for p in params:
        p.grad = None
    backward(surrogate)
    out = np.concatenate([(np.zeros(p.values.size) if p.grad is None else p.grad.ravel())
                          for p in params])
    for p in params:
        p.grad = None
    return out


def _sender_weights(batch, critics, advantage, w_values=None):
    if w_values is None:
        if critics is None or critics.w_i is None:
            raise ValueError("signaling gradient needs W^i values or a W^i critic")
        w_values = critics.w_i.evaluate(batch.states, batch.actions)
    weights = np.asarray(w_values, dtype=np.float64)
    if advantage and critics is not None and critics.v_i is not None:
        weights = weights - critics.v_i.evaluate(batch.states)
    return weights


def signaling_surrogate(scheme, policy, batch, critics=None, advantage=True, w_values=None,
                        hard=None):
    """mean_t W^i(s_t, a_t) * [log pi(a_t | o_t, sigma_t) + log phi(sigma_t | s_t)].

    The receiver sees the rebuilt relaxed signal, so the log-pi term carries
    gradient into the scheme.  ``w_values`` overrides the critic.
    """
    batch = as_batch(batch)
    if batch.signal_noise is None:
        raise ValueError("trajectory lacks signal noise: the receiver-policy term would vanish")
    weights = _sender_weights(batch, critics, advantage, w_values)
    log_phi = scheme.logits(batch.states).log_softmax().gather(batch.signal_index)
    signal = scheme.relaxed_signal(batch.states, batch.signal_index, batch.signal_noise, hard=hard)
    log_pi = policy.log_probs(Tensor(batch.obs), signal).gather(batch.actions)
    return ((log_phi + log_pi) * weights).mean()


def signaling_gradient(scheme, policy, critics, trajectory, advantage=True, w_values=None,
                       hard=None):
    return flat_grad(signaling_surrogate(scheme, policy, trajectory, critics, advantage,
                                         w_values, hard), scheme.params)


def pg_surrogate(scheme, batch, critics=None, q_values=None, advantage=True):
    """mean_t Q^i(s_t, sigma_t) * log phi(sigma_t | s_t): the signal treated as an action.

    Q^i defaults to the Monte-Carlo sender return.
    """
    batch = as_batch(batch)
    q = batch.returns_sender if q_values is None else np.asarray(q_values, dtype=np.float64)
    if advantage and critics is not None and critics.v_i is not None:
        q = q - critics.v_i.evaluate(batch.states)
    log_phi = scheme.logits(batch.states).log_softmax().gather(batch.signal_index)
    return (log_phi * q).mean()


def pg_signal_gradient(scheme, critics, trajectory, q_values=None, advantage=True):
    return flat_grad(pg_surrogate(scheme, trajectory, critics, q_values, advantage),
                     scheme.params)


@dataclass
class ConstraintEstimate:
    sigma: int
    sigma_prime: int
    value: float
    grad_eta: np.ndarray


def signal_values(policy, batch, w_j):
    """v[t, sigma] = sum_a pi(a | o_t, sigma) * W^j(s_t, a) with pi held fixed."""
    probs = policy.all_signal_distributions(batch.obs)      # (N, K, A)
    w = np.asarray(w_j, dtype=np.float64)                   # (N, A)
    return np.einsum("nka,na->nk", probs, w)


def constraint_matrix(scheme, policy, batch, critic_wj=None, w_j=None):
    """C[sigma, sigma'] = mean_t phi(sigma | s_t) * (v[t, sigma] - v[t, sigma']).

    Only phi is on the graph; the receiver policy and W^j are constants.
    The diagonal is exactly zero.
    """
    batch = as_batch(batch)
    if w_j is None:
        w_j = critic_wj.evaluate(batch.states)
    v = signal_values(policy, batch, w_j)
    n, k = v.shape
    phi = scheme.logits(batch.states).softmax()
    own = (phi * v).mean(axis=0)                    # (K,)
    cross = (phi.T @ v).scale(1.0 / n)              # (K, K)
    off_diag = 1.0 - np.eye(k)
    return (own.reshape(k, 1) - cross) * off_diag


def constraint_value_and_grad(scheme, policy, critic_wj, trajectory, sigma, sigma_prime, w_j=None):
    c = constraint_matrix(scheme, policy, trajectory, critic_wj, w_j)
    if sigma == sigma_prime:
        return ConstraintEstimate(sigma, sigma_prime, 0.0,
                                  np.zeros(sum(p.values.size for p in scheme.params)))
    entry = c[sigma, sigma_prime]
    return ConstraintEstimate(sigma, sigma_prime, float(entry.values),
                              flat_grad(entry, scheme.params))


def sample_constraint_pairs(signal_index, signal_count, samples, rng):
    """Each realized signal paired with up to ``samples`` distinct other signals."""
    pairs = []
    for sigma in np.unique(signal_index):
        others = np.delete(np.arange(signal_count), sigma)
        take = min(samples, len(others))
        for sp in rng.choice(others, size=take, replace=False):
            pairs.append((int(sigma), int(sp)))
    return pairs


def honesty(scheme, states):
    """Mean total-variation distance between the signal laws of distinct states."""
    probs = scheme.distribution(states)
    if len(probs) < 2:
        return 0.0
    tv = 0.5 * np.abs(probs[:, None, :] - probs[None, :, :]).sum(axis=-1)
    n = len(probs)
    return float(tv.sum() / (n * (n - 1)))
