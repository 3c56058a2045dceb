"""Train every algorithm on Recommendation Letter and compare final rewards.

Expected regimes: SGOC/PGOC reach the sender-optimal equilibrium (about
2/3 for the professor), DIAL the honest one (1/3 each), SG and PG the
babbling one (0 each).
"""

import sys

import numpy as np

from msglab.config import ExperimentConfig
from msglab.harness import run_experiment

seeds = list(range(int(sys.argv[1]) if len(sys.argv) > 1 else 3))
for algo in ("sgoc", "pgoc", "dial", "sg", "pg"):
    cfg = ExperimentConfig(env="recletter", algorithm=algo, seeds=seeds)
    result = run_experiment(cfg, write=False)
    r_i = np.array(list(result.final("reward_sender").values()))
    r_j = np.array(list(result.final("reward_receiver").values()))
    hon = np.array(list(result.final("honesty").values()))
    print("%-5s sender %.3f  receiver %.3f  honesty %.3f" % (algo, r_i.mean(), r_j.mean(), hon.mean()))
