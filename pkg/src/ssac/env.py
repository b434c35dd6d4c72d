"""Deterministic 2D point-mass navigation with circular, non-solid hazards.

The agent is a double integrator. Observations carry, for every hazard, the
surface distance ``d`` and its analytic rate ``d_dot`` so a safety index can be
evaluated from observations alone.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .nn import ConfigurationError

W_PROGRESS = 1.0
W_ACTION = 0.01
GOAL_BONUS = 1.0
_DEGENERATE = 1e-9
_MAX_RESET_TRIES = 100_000


@dataclass(frozen=True)
class Hazard:
    x: float
    y: float
    radius: float

    def __post_init__(self):
        for name in ("x", "y", "radius"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class EnvConfig:
    """Arena layout and dynamics limits.

    ``reset_margin`` is the clearance (beyond the hazard radius) kept by initial
    positions; it must be at least the safety margin ``d_min`` in use.
    """

    arena_half_width: float = 3.0
    dt: float = 0.1
    a_max: float = 1.0
    v_max: float = 0.5
    hazards: tuple = (Hazard(0.0, 0.0, 0.5),)
    goal: tuple = (2.0, 0.0)
    goal_radius: float = 0.3
    max_episode_steps: int = 200
    reset_region: tuple = (-2.8, -1.6, -1.5, 1.5)  # xmin, xmax, ymin, ymax
    reset_margin: float = 0.4

    def __post_init__(self):
        L = self.arena_half_width
        if not (L > 0 and self.dt > 0 and self.a_max > 0 and self.v_max > 0):
            raise ConfigurationError("arena_half_width, dt, a_max, v_max must be positive")
        if self.max_episode_steps < 1:
            raise ConfigurationError("max_episode_steps must be >= 1")
        object.__setattr__(
            self, "hazards", tuple(h if isinstance(h, Hazard) else Hazard(*h) for h in self.hazards)
        )
        for h in self.hazards:
            if h.radius <= 0 or abs(h.x) > L or abs(h.y) > L:
                raise ConfigurationError(f"hazard {h} must have positive radius and lie in the arena")
        gx, gy = self.goal
        if abs(gx) > L or abs(gy) > L or self.goal_radius <= 0:
            raise ConfigurationError("goal must lie in the arena with positive radius")
        xmin, xmax, ymin, ymax = self.reset_region
        if not (-L <= xmin <= xmax <= L and -L <= ymin <= ymax <= L):
            raise ConfigurationError("reset_region must be an ordered box inside the arena")
        if self.reset_margin < 0:
            raise ConfigurationError("reset_margin must be non-negative")

    @property
    def n_hazards(self) -> int:
        return len(self.hazards)

    @property
    def obs_dim(self) -> int:
        return 6 + 2 * self.n_hazards

    @property
    def action_dim(self) -> int:
        return 2


@dataclass
class EnvState:
    position: np.ndarray
    velocity: np.ndarray
    step_count: int = 0


@dataclass
class StepResult:
    next_observation: np.ndarray
    reward: float
    done: bool
    goal_reached: bool
    distances_before: np.ndarray  # (n_hazards, 2): columns d, d_dot
    distances_after: np.ndarray
    action_clipped: bool = False


def hazard_distance(position, velocity, center, radius):
    """Surface distance to a hazard and its time derivative.

    Works on single points or stacked ``(..., 2)`` arrays. At the hazard center
    the rate is undefined and the worst case ``-|v|`` is returned.
    """
    rel = np.asarray(position, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    vel = np.asarray(velocity, dtype=np.float64)
    dist = np.linalg.norm(rel, axis=-1)
    d = dist - radius
    safe = np.maximum(dist, _DEGENERATE)
    d_dot = np.where(
        dist < _DEGENERATE,
        -np.linalg.norm(vel, axis=-1),
        np.sum(rel * vel, axis=-1) / safe,
    )
    if d.ndim == 0:
        return float(d), float(d_dot)
    return d, d_dot


def all_hazard_distances(config: EnvConfig, position, velocity) -> np.ndarray:
    """``(..., n_hazards, 2)`` array of (d, d_dot) pairs."""
    position = np.asarray(position, dtype=np.float64)
    out = np.empty(position.shape[:-1] + (config.n_hazards, 2))
    for i, h in enumerate(config.hazards):
        d, dd = hazard_distance(position, velocity, h.center, h.radius)
        out[..., i, 0] = d
        out[..., i, 1] = dd
    return out


def observe(config: EnvConfig, state: EnvState) -> np.ndarray:
    p, v = state.position, state.velocity
    goal_rel = np.asarray(config.goal, dtype=np.float64) - p
    return np.concatenate([p, v, goal_rel, all_hazard_distances(config, p, v).reshape(-1)])


def hazard_block(config: EnvConfig, observations) -> np.ndarray:
    """Extract the (d, d_dot) pairs from observation(s): shape ``(..., n_hazards, 2)``."""
    obs = np.asarray(observations, dtype=np.float64)
    return obs[..., 6:].reshape(obs.shape[:-1] + (config.n_hazards, 2))


def propagate(config: EnvConfig, position, velocity, action):
    """Vectorized dynamics: returns (position', velocity'). Action assumed in [-1, 1]."""
    v = np.asarray(velocity, dtype=np.float64) + np.asarray(action, dtype=np.float64) * (config.a_max * config.dt)
    speed = np.linalg.norm(v, axis=-1, keepdims=True)
    v = np.where(speed > config.v_max, v * (config.v_max / np.maximum(speed, 1e-300)), v)
    L = config.arena_half_width
    p = np.clip(np.asarray(position, dtype=np.float64) + v * config.dt, -L, L)
    return p, v


def reset(config: EnvConfig, rng: np.random.Generator):
    """Uniform position in ``reset_region`` away from every inflated hazard, zero velocity."""
    xmin, xmax, ymin, ymax = config.reset_region
    for _ in range(_MAX_RESET_TRIES):
        p = np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])
        if all(np.linalg.norm(p - h.center) > h.radius + config.reset_margin for h in config.hazards):
            state = EnvState(p, np.zeros(2), 0)
            return state, observe(config, state)
    raise ConfigurationError("reset_region has no point clear of the inflated hazards")


def step(state: EnvState, action, config: EnvConfig):
    """Advance one step. Out-of-range actions are clamped with a warning."""
    action = np.asarray(action, dtype=np.float64)
    clipped = bool(np.any(np.abs(action) > 1.0))
    if clipped:
        warnings.warn("action outside [-1, 1] was clamped", RuntimeWarning, stacklevel=2)
        action = np.clip(action, -1.0, 1.0)
    before = all_hazard_distances(config, state.position, state.velocity)
    goal = np.asarray(config.goal, dtype=np.float64)
    p, v = propagate(config, state.position, state.velocity, action)
    dist0 = np.linalg.norm(state.position - goal)
    dist1 = np.linalg.norm(p - goal)
    reached = bool(dist1 <= config.goal_radius)
    reward = W_PROGRESS * (dist0 - dist1) - W_ACTION * float(action @ action)
    if reached and dist0 > config.goal_radius:
        reward += GOAL_BONUS
    new = EnvState(p, v, state.step_count + 1)
    done = reached or new.step_count >= config.max_episode_steps
    after = all_hazard_distances(config, p, v)
    return new, StepResult(observe(config, new), float(reward), done, reached, before, after, clipped)


@dataclass
class Nav2DEnv:
    """Stateful wrapper around :func:`reset`/:func:`step` for rollout loops."""

    config: EnvConfig = field(default_factory=EnvConfig)
    state: EnvState = None

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state, obs = reset(self.config, rng)
        return obs

    def reset_to(self, position, velocity) -> np.ndarray:
        self.state = EnvState(np.array(position, dtype=np.float64), np.array(velocity, dtype=np.float64), 0)
        return observe(self.config, self.state)

    def step(self, action) -> StepResult:
        self.state, result = step(self.state, action, self.config)
        return result
