"""Learning to persuade in Markov signaling games: autodiff, environments, agents,
signaling-gradient learning, exact oracles and an experiment harness."""

from msglab.autodiff import Tensor, backward, gumbel_softmax_sample
from msglab.config import Algorithm, ExperimentConfig, LagrangeMode, load_config
from msglab.env import ObsMode, ReachingGoals, RecommendationLetter, make_env

__all__ = ["Tensor", "backward", "gumbel_softmax_sample", "Algorithm", "ExperimentConfig",
           "LagrangeMode", "load_config", "ObsMode", "ReachingGoals", "RecommendationLetter",
           "make_env"]
