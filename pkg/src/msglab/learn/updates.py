"""Parameter updates for critics, receiver and sender."""

from dataclasses import dataclass, field

import numpy as np

from msglab.autodiff import Tensor, backward, concat
from msglab.config import LagrangeMode
from msglab.learn.batch import as_batch


@dataclass
class LagrangeConfig:
    lam: float = 3.0
    epsilon_honesty: float = 0.1
    mode: LagrangeMode = LagrangeMode.LAGRANGIAN
    lr_multiplier: float = 3e-4

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = LagrangeMode(self.mode)
        if self.lam < 0 or self.epsilon_honesty < 0:
            raise ValueError("lambda and epsilon must be non-negative")


@dataclass
class Multipliers:
    """Dual variables for DGD mode; start at zero."""

    pairs: np.ndarray            # (K, K)
    honesty: float = 0.0

    @classmethod
    def zeros(cls, signal_count):
        return cls(np.zeros((signal_count, signal_count)))


@dataclass
class UpdateInfo:
    loss: float
    extras: dict = field(default_factory=dict)


def _step(optimizer, loss):
    optimizer.zero_grad()
    backward(loss)
    optimizer.step()
    optimizer.zero_grad()


def regress(critic, optimizer, inputs, targets, actions=None):
    """One step of 0.5 * mean squared error; returns the loss before the step."""
    pred = critic(Tensor(inputs), actions)
    err = pred - np.asarray(targets, dtype=np.float64)
    loss = (err * err).mean().scale(0.5)
    _step(optimizer, loss)
    critic.after_update()
    return float(loss.values)


def critic_targets(critic, batch, rewards, returns, next_inputs=None, gamma=0.0, mode="mc"):
    """Monte-Carlo returns, or one-step bootstrapped targets from the target copy."""
    if mode == "mc" or next_inputs is None:
        return returns
    boot = critic.evaluate(next_inputs, target=True)
    if boot.ndim == 2:
        boot = boot.max(axis=1)
    return rewards + gamma * np.where(batch.done, 0.0, boot)


def receiver_input(batch):
    return np.concatenate([batch.obs, batch.signal_one_hot], axis=1)


def receiver_a2c_update(policy, critic_v, trajectory, gamma=None, optimizer=None,
                        critic_optimizer=None, lr=None, entropy_coef=0.0):
    """Advantage actor-critic step for the receiver.

    A_t = G^j_t - V^j(o_t, sigma_t).  The signal enters as a constant
    one-hot, so nothing flows back to the sender.  Returns the critic loss.
    """
    batch = as_batch(trajectory)
    if len(batch) == 0:
        raise ValueError("empty trajectory")
    if gamma is not None and gamma != batch.gamma:
        batch.compute_returns(gamma)
    if optimizer is None:
        from msglab.agents import Adam
        optimizer = Adam(policy.params, lr)
    x = receiver_input(batch)
    advantage = batch.returns_receiver - critic_v.evaluate(x)
    logp_all = policy.net(Tensor(x)).log_softmax()
    loss = -(logp_all.gather(batch.actions) * advantage).mean()
    if entropy_coef > 0:
        entropy = -(logp_all.exp() * logp_all).sum(axis=1).mean()
        loss = loss - entropy.scale(entropy_coef)
    _step(optimizer, loss)
    critic_loss = None
    if critic_optimizer is not None:
        critic_loss = regress(critic_v, critic_optimizer, x, batch.returns_receiver)
    return UpdateInfo(float(loss.values), {"critic_loss": critic_loss,
                                           "mean_advantage": float(advantage.mean())})


def lagrangian_penalty(c, pairs, cfg, multipliers=None):
    """Constraint term added to the sender's ascent objective.

    Lagrangian mode: sum_p lam * min(0, C_p) + lam * min(0, mean_p C_p - eps).
    DGD mode: sum_p lam_p * C_p + lam_h * (mean_p C_p - eps) with learned duals.
    Returns None when there are no pairs.
    """
    if not pairs:
        return None
    rows = np.array([p[0] for p in pairs])
    cols = np.array([p[1] for p in pairs])
    picked = c[rows, cols]
    slack = picked.mean() - cfg.epsilon_honesty
    if cfg.mode is LagrangeMode.LAGRANGIAN:
        return picked.neg_part().sum().scale(cfg.lam) + slack.neg_part().scale(cfg.lam)
    lam_pairs = multipliers.pairs[rows, cols]
    return (picked * lam_pairs).sum() + slack.scale(multipliers.honesty)


def update_multipliers(multipliers, c_values, pairs, cfg):
    """lam <- max(0, lam - alpha * C): grows while a constraint is violated."""
    for sigma, sp in pairs:
        lam = multipliers.pairs[sigma, sp] - cfg.lr_multiplier * c_values[sigma, sp]
        multipliers.pairs[sigma, sp] = max(0.0, lam)
    if pairs:
        slack = np.mean([c_values[s, sp] for s, sp in pairs]) - cfg.epsilon_honesty
        multipliers.honesty = max(0.0, multipliers.honesty - cfg.lr_multiplier * slack)
    return multipliers


def constrained_direction(objective_grad, estimates, cfg, multipliers=None):
    """Ascent direction from a flat objective gradient and per-pair estimates."""
    direction = np.array(objective_grad, dtype=np.float64)
    if not estimates:
        return direction
    values = np.array([e.value for e in estimates])
    grads = np.array([e.grad_eta for e in estimates])
    slack = values.mean() - cfg.epsilon_honesty
    if cfg.mode is LagrangeMode.LAGRANGIAN:
        direction = direction + cfg.lam * (grads * (values < 0)[:, None]).sum(axis=0)
        if slack < 0:
            direction = direction + cfg.lam * grads.mean(axis=0)
        return direction
    lam = np.array([multipliers.pairs[e.sigma, e.sigma_prime] for e in estimates])
    return direction + (grads * lam[:, None]).sum(axis=0) + multipliers.honesty * grads.mean(axis=0)


def constrained_sender_update(scheme, optimizer, objective, cfg, constraints=None, pairs=(),
                              multipliers=None, estimates=None):
    """Ascend the sender objective plus the obedience penalty.

    ``objective`` is either a scalar surrogate tensor or a flat gradient.
    Constraints come either as the matrix ``constraints`` with ``pairs``
    (one backward pass) or as a list of ``ConstraintEstimate``.  In DGD
    mode the multipliers are updated after the parameter step.
    """
    if isinstance(objective, Tensor):
        total = objective
        penalty = None
        if constraints is not None:
            penalty = lagrangian_penalty(constraints, list(pairs), cfg, multipliers)
        if penalty is not None:
            total = total + penalty
        _step(optimizer, -total)
    else:
        direction = constrained_direction(objective, estimates or [], cfg, multipliers)
        offset = 0
        grads = []
        for p in scheme.params:
            n = p.values.size
            grads.append(-direction[offset:offset + n].reshape(p.shape))
            offset += n
        optimizer.step(grads)
    if cfg.mode is LagrangeMode.DGD and multipliers is not None:
        if constraints is not None:
            update_multipliers(multipliers, constraints.values, list(pairs), cfg)
        elif estimates:
            c_values = np.zeros_like(multipliers.pairs)
            for e in estimates:
                c_values[e.sigma, e.sigma_prime] = e.value
            update_multipliers(multipliers, c_values, [(e.sigma, e.sigma_prime) for e in estimates], cfg)
    return multipliers


def dial_loss(scheme, critic_q, batch):
    """Receiver's Q-regression error with the signal on the sender's graph."""
    batch = as_batch(batch)
    if batch.signal_noise is None:
        raise ValueError("trajectory lacks signal noise: DIAL needs the soft signal pathway")
    signal = scheme.relaxed_signal(batch.states, batch.signal_index, batch.signal_noise)
    x = signal if batch.obs.shape[1] == 0 else concat([Tensor(batch.obs), signal], axis=1)
    q = critic_q(x, batch.actions)
    err = q - batch.returns_receiver
    return (err * err).mean().scale(0.5)


def dial_update(scheme, optimizer, critic_q, trajectory):
    """Move the scheme to reduce the receiver's value-regression loss.

    Only receiver quantities enter, so sender rewards play no part.
    """
    loss = dial_loss(scheme, critic_q, trajectory)
    _step(optimizer, loss)
    return UpdateInfo(float(loss.values))
