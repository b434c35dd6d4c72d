"""Safe set actor-critic with a learned safety-index transition and state-wise multipliers."""

from .env import EnvConfig, Hazard, Nav2DEnv
from .estimator import SafeSetActorCritic
from .learner import Agent, LearnerConfig, evaluate, train
from .nn import ConfigurationError, TrainingError
from .safety import SafetyIndexParams, check_feasibility

__all__ = [
    "Agent",
    "ConfigurationError",
    "EnvConfig",
    "Hazard",
    "LearnerConfig",
    "Nav2DEnv",
    "SafeSetActorCritic",
    "SafetyIndexParams",
    "TrainingError",
    "check_feasibility",
    "evaluate",
    "train",
]
