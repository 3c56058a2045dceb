"""Gradient estimators, update rules and the training loop."""

from msglab.learn.batch import Batch, as_batch, discounted_returns, rollout
from msglab.learn.estimators import (ConstraintEstimate, SenderCritics, constraint_matrix,
                                     constraint_value_and_grad, honesty, pg_signal_gradient,
                                     pg_surrogate, sample_constraint_pairs, signaling_gradient,
                                     signaling_surrogate)
from msglab.learn.train import Agents, MetricsRow, train
from msglab.learn.updates import (LagrangeConfig, Multipliers, constrained_sender_update,
                                  dial_update, receiver_a2c_update)
