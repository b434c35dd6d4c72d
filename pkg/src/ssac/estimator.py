"""scikit-learn style wrapper: ``fit`` trains on the navigation env, ``predict`` maps observations to actions."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .env import EnvConfig
from .learner import LearnerConfig, evaluate, train
from .safety import SafetyIndexParams


class SafeSetActorCritic(BaseEstimator):
    """Safe set actor-critic agent.

    Parameters
    ----------
    env_config, safety_params, learner_config
        ``None`` selects the package defaults.
    random_state : int
        Seed for the single generator that drives resets, exploration and minibatches.
    """

    def __init__(self, env_config=None, safety_params=None, learner_config=None, random_state=0):
        self.env_config = env_config
        self.safety_params = safety_params
        self.learner_config = learner_config
        self.random_state = random_state

    def _resolved(self):
        return (
            self.env_config or EnvConfig(),
            self.safety_params or SafetyIndexParams(),
            self.learner_config or LearnerConfig(),
        )

    def fit(self, X=None, y=None, on_iteration=None):
        """Train from scratch. ``X`` and ``y`` are ignored; data comes from the environment."""
        env, params, cfg = self._resolved()
        rng = np.random.default_rng(self.random_state)
        self.agent_, self.metrics_ = train(env, cfg, params, rng, on_iteration)
        self.n_features_in_ = env.obs_dim
        return self

    def predict(self, X, deterministic=True, rng=None):
        check_is_fitted(self, "agent_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.agent_.act(X, rng=rng, deterministic=deterministic)

    def multipliers(self, X):
        check_is_fitted(self, "agent_")
        return self.agent_.multipliers(check_array(X, dtype=np.float64))

    def evaluate(self, episodes=50, seed=None, deterministic=True):
        check_is_fitted(self, "agent_")
        env, params, _ = self._resolved()
        rng = np.random.default_rng(self.random_state + 1 if seed is None else seed)
        return evaluate(self.agent_, env, params, episodes, rng, deterministic)
