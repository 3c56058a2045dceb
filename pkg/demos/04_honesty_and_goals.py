"""Honesty as a function of the constraint strength, then a short grid-world run.

Raising lambda (penalty weight) and epsilon (required aggregate slack)
makes the professor's letters more informative.  The second half trains
SGOC for a few thousand episodes on the 3x3 Reaching Goals map and prints
the learning curve; the sender sees both apples, the receiver only its own
position.
"""

from msglab.config import ExperimentConfig
from msglab.harness import run_experiment, run_honesty_sweep

base = ExperimentConfig(env="recletter", algorithm="sgoc", seeds=[0, 1, 2])
for lam, eps, mean, std, n in run_honesty_sweep(base, [0.0, 5.0], [0.0, 0.3], write=False):
    print("lambda=%.1f epsilon=%.2f honesty %.3f +- %.3f" % (lam, eps, mean, std))

cfg = ExperimentConfig(env="goals3", algorithm="sgoc", seeds=[0], total_episodes=4000)
rows = run_experiment(cfg, write=False).rows[0]
for row in rows:
    print("episode %5d  sender %7.2f  receiver %7.2f  honesty %.3f"
          % (row.episode_index, row.reward_sender, row.reward_receiver, row.honesty))
