"""Safety-index energy functions and control-safe-set checks.

``phi0 = d_min - d`` marks unsafe states (> 0). The parameterized index
``phi = sigma + d_min**n - d**n - k * d_dot`` adds a margin and a rate term so
that a dissipating action exists before the hazard is reached. A step is
constraint-satisfying when ``phi(s') - max(phi(s) - eta, 0)`` is negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import EnvConfig, EnvState, all_hazard_distances, hazard_block, propagate
from .nn import ConfigurationError

STRICT_EPS = 1e-9
_MAX_REJECTIONS = 100_000


@dataclass(frozen=True)
class SafetyIndexParams:
    sigma: float = 0.04
    n: int = 2
    k: float = 1.0
    d_min: float = 0.1
    eta: float = 0.0

    def __post_init__(self):
        vals = (self.sigma, self.n, self.k, self.d_min, self.eta)
        if not all(np.isfinite(v) for v in vals):
            raise ConfigurationError("safety index parameters must be finite")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError(f"n must be an integer >= 1, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if self.sigma < 0 or self.k < 0 or self.d_min <= 0 or self.eta < 0:
            raise ConfigurationError("need sigma >= 0, k >= 0, d_min > 0, eta >= 0")


def phi0(d, d_min: float):
    return d_min - np.asarray(d, dtype=np.float64) if np.ndim(d) else d_min - float(d)


def _signed_power(d, n):
    # Keeps -d**n increasing with penetration depth for even n.
    return np.sign(d) * np.abs(d) ** n


def phi(d, d_dot, params: SafetyIndexParams):
    d = np.asarray(d, dtype=np.float64)
    d_dot = np.asarray(d_dot, dtype=np.float64)
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(d_dot))):
        raise ValueError("safety index inputs must be finite")
    out = params.sigma + params.d_min**params.n - _signed_power(d, params.n) - params.k * d_dot
    return float(out) if out.ndim == 0 else out


def transition_cost(phi_s, phi_next, eta: float = 0.0):
    """phi(s') - max(phi(s) - eta, 0); negative certifies the step."""
    out = np.asarray(phi_next, dtype=np.float64) - np.maximum(np.asarray(phi_s, dtype=np.float64) - eta, 0.0)
    return float(out) if out.ndim == 0 else out


def phi_from_pairs(pairs, params: SafetyIndexParams):
    """phi for an ``(..., n_hazards, 2)`` array of (d, d_dot) pairs."""
    pairs = np.asarray(pairs, dtype=np.float64)
    return phi(pairs[..., 0], pairs[..., 1], params)


def phi_from_observation(config: EnvConfig, observations, params: SafetyIndexParams):
    return phi_from_pairs(hazard_block(config, observations), params)


def in_safe_subset(config: EnvConfig, observation, params: SafetyIndexParams) -> bool:
    """True iff phi <= 0 and phi0 <= 0 for every hazard."""
    pairs = hazard_block(config, observation)
    return bool(np.all(phi_from_pairs(pairs, params) <= 0.0) and np.all(phi0(pairs[..., 0], params.d_min) <= 0.0))


def _costs_for_actions(config: EnvConfig, position, velocity, actions, params):
    """Per-action, per-hazard transition cost from one state: shape (n_actions, n_hazards)."""
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    phi_s = phi_from_pairs(all_hazard_distances(config, position, velocity), params)
    p1, v1 = propagate(config, np.broadcast_to(position, actions.shape), np.broadcast_to(velocity, actions.shape), actions)
    phi_next = phi_from_pairs(all_hazard_distances(config, p1, v1), params)
    return transition_cost(phi_s, phi_next, params.eta)


def is_control_safe(config: EnvConfig, state: EnvState, action, params: SafetyIndexParams) -> bool:
    """Simulates one step with the true dynamics; verification use only."""
    if config.n_hazards == 0:
        return True
    costs = _costs_for_actions(config, state.position, state.velocity, np.clip(action, -1.0, 1.0), params)
    return bool(np.all(costs <= -STRICT_EPS))


@dataclass
class FeasibilityReport:
    states_tested: int
    states_with_empty_control_safe_set: int
    worst_state: EnvState | None
    empirical_min_safe_action_fraction: float

    @property
    def feasible(self) -> bool:
        return self.states_with_empty_control_safe_set == 0

    def summary(self) -> str:
        return (
            f"states_tested={self.states_tested} "
            f"states_with_empty_control_safe_set={self.states_with_empty_control_safe_set} "
            f"min_safe_action_fraction={self.empirical_min_safe_action_fraction:.4f}"
        )


def sample_safe_subset_state(config: EnvConfig, params: SafetyIndexParams, rng: np.random.Generator) -> EnvState:
    """Rejection-sample a state in the safe subset: uniform position, velocity uniform in the speed disk."""
    L = config.arena_half_width
    for _ in range(_MAX_REJECTIONS):
        p = rng.uniform(-L, L, size=2)
        r = config.v_max * np.sqrt(rng.uniform())
        ang = rng.uniform(0.0, 2.0 * np.pi)
        v = r * np.array([np.cos(ang), np.sin(ang)])
        pairs = all_hazard_distances(config, p, v)
        if np.all(phi_from_pairs(pairs, params) <= 0.0) and np.all(phi0(pairs[..., 0], params.d_min) <= 0.0):
            return EnvState(p, v, 0)
    raise ConfigurationError("could not sample a state with phi <= 0 and phi0 <= 0")


def action_grid(resolution: int) -> np.ndarray:
    axis = np.linspace(-1.0, 1.0, resolution)
    ax, ay = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([ax.ravel(), ay.ravel()], axis=1)


def check_feasibility(
    config: EnvConfig,
    params: SafetyIndexParams,
    n_states: int,
    action_grid_resolution: int,
    rng: np.random.Generator,
) -> FeasibilityReport:
    """Count sampled safe-subset states where no grid action keeps the index from rising."""
    if n_states < 1:
        raise ValueError("n_states must be >= 1")
    if action_grid_resolution < 3:
        raise ValueError("action grid needs at least 3 points per dimension")
    if config.n_hazards == 0:
        return FeasibilityReport(n_states, 0, None, 1.0)
    grid = action_grid(action_grid_resolution)
    empty, worst, worst_frac = 0, None, 1.0
    for _ in range(n_states):
        s = sample_safe_subset_state(config, params, rng)
        costs = _costs_for_actions(config, s.position, s.velocity, grid, params)
        frac = float(np.mean(np.all(costs <= -STRICT_EPS, axis=1)))
        if frac == 0.0:
            empty += 1
        if worst is None or frac < worst_frac:
            worst, worst_frac = s, frac
    return FeasibilityReport(n_states, empty, worst, worst_frac)
