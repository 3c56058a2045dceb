"""Bayesian persuasion on the Recommendation Letter game.

A professor (sender) knows whether a student is strong or weak and writes a
letter; HR (receiver) decides whether to hire.  We solve the sender's
optimal signaling problem exactly and inspect the receiver's incentives.
"""

import numpy as np

from msglab.oracle import (check_incentive_compatibility, exact_msg_value,
                           recommendation_letter_game, recommendation_letter_msg,
                           solve_persuasion_lp)

game = recommendation_letter_game()
print("prior (weak, strong):", game.prior)

# The optimal scheme recommends every strong student and half the weak ones.
scheme, value = solve_persuasion_lp(game)
print("optimal phi(action | state):\n", scheme.phi)
print("sender value: %.6f" % value)

# After a recommendation HR's posterior is 50/50 and hiring is (weakly) optimal.
for report in check_incentive_compatibility(game, scheme):
    print("signal %d: posterior %s, best response %d, slack %+.4f"
          % (report.signal, np.round(report.posterior, 4), report.best_response, report.slack))

# Compare the three equilibria of the game with an obedient receiver.
obedient = np.eye(2)
msg = recommendation_letter_msg()
for name, phi in [("uninformative", [[1, 0], [1, 0]]),
                  ("honest", [[1, 0], [0, 1]]),
                  ("optimal, eps=0.1", [[0.6, 0.4], [0, 1]])]:
    vals = exact_msg_value(msg, np.array(phi, float), obedient, gamma=0.0)
    print("%-18s sender %.4f  receiver %.4f" % (name, vals.value_sender, vals.value_receiver))
