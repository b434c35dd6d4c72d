"""Safe set actor-critic training loop and agent container.

Per iteration: collect ``env_steps_per_iteration`` transitions with the current
stochastic policy, then run ``gradient_steps_per_iteration`` gradient steps.
Every step updates both soft Q critics and the safety critic; the policy and
temperature are updated every ``m_pi`` steps and the multiplier net (by ascent)
every ``m_lambda`` steps. Critic targets track by Polyak averaging. The safety
critic has zero discount, so it needs no target copy.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .buffer import ReplayBuffer, Transition
from .env import EnvConfig, Nav2DEnv, hazard_block
from .losses import alpha_loss_from_log_probs, multiplier_grad, policy_loss, q_loss, qc_loss
from .networks import MultiplierNet, PolicyNet, StateActionNet, Temperature
from .nn import Adam, ConfigurationError, LinearSchedule, TrainingError, project_params, soft_update
from .safety import SafetyIndexParams, phi0, phi_from_pairs, transition_cost

log = logging.getLogger(__name__)


@dataclass
class LearnerConfig:
    gamma: float = 0.99
    tau: float = 0.005
    m_pi: int = 3
    m_lambda: int = 12
    batch_size: int = 256
    buffer_capacity: int = 500_000
    actor_lr_start: float = 3e-5
    actor_lr_end: float = 1e-6
    critic_lr_start: float = 8e-5
    critic_lr_end: float = 1e-6
    multiplier_lr_start: float = 5e-5
    multiplier_lr_end: float = 5e-6
    alpha_lr_start: float = 5e-5
    alpha_lr_end: float = 1e-6
    hidden_sizes: tuple = (64, 64)
    env_steps_per_iteration: int = 1000
    gradient_steps_per_iteration: int = 1000
    iterations: int = 200
    warmup_steps: int = 5000
    anneal_steps: int = 0  # 0: anneal over all gradient steps of the run
    projection_bound: float = 1e6
    init_log_alpha: float = 0.0
    target_entropy: float = -2.0
    lagrangian: bool = True  # False: multiplier fixed at 0 (unconstrained ablation)
    multiplier_cost_floor: float = float("inf")  # multiplier ascent sees max(Qc, -floor)
    multiplier_logit_floor: float = float("-inf")  # no downward push on softplus inputs below this

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        rates = [getattr(self, f.name) for f in fields(self) if f.name.endswith(("_start", "_end"))]
        if any(not r > 0 for r in rates):
            raise ConfigurationError("all learning rates must be positive")
        if self.m_pi < 1 or self.m_lambda < 1:
            raise ConfigurationError("m_pi and m_lambda must be >= 1")
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.tau <= 1.0):
            raise ConfigurationError("gamma and tau must lie in [0, 1]")
        for name in ("batch_size", "buffer_capacity", "env_steps_per_iteration", "iterations"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.gradient_steps_per_iteration < 0 or self.warmup_steps < 0 or self.anneal_steps < 0:
            raise ConfigurationError("step counts must be non-negative")
        if not self.multiplier_cost_floor > 0:
            raise ConfigurationError("multiplier_cost_floor must be positive")
        if self.multiplier_logit_floor != self.multiplier_logit_floor:
            raise ConfigurationError("multiplier_logit_floor must be a number")
        if not self.projection_bound > 0:
            raise ConfigurationError("projection_bound must be positive")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ConfigurationError("hidden_sizes must be positive")

    @property
    def total_gradient_steps(self) -> int:
        return self.iterations * self.gradient_steps_per_iteration


class Agent:
    """All trainable networks, targets, and their optimizers."""

    def __init__(self, obs_dim: int, action_dim: int, n_constraints: int, config: LearnerConfig, rng):
        h = config.hidden_sizes
        self.config = config
        self.obs_dim, self.action_dim, self.n_constraints = obs_dim, action_dim, n_constraints
        self.policy = PolicyNet(obs_dim, action_dim, h, rng)
        self.q1 = StateActionNet(obs_dim, action_dim, 1, h, rng)
        self.q2 = StateActionNet(obs_dim, action_dim, 1, h, rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.safety_critic = StateActionNet(obs_dim, action_dim, n_constraints, h, rng)
        self.multiplier = MultiplierNet(obs_dim, n_constraints, h, rng)
        self.temperature = Temperature(config.init_log_alpha, config.target_entropy)

        total = config.anneal_steps or max(config.total_gradient_steps, 1)
        c = config
        self.optimizers = {
            "policy": Adam(self.policy.params, LinearSchedule(c.actor_lr_start, c.actor_lr_end, max(total // c.m_pi, 1))),
            "q1": Adam(self.q1.params, LinearSchedule(c.critic_lr_start, c.critic_lr_end, total)),
            "q2": Adam(self.q2.params, LinearSchedule(c.critic_lr_start, c.critic_lr_end, total)),
            "safety_critic": Adam(self.safety_critic.params, LinearSchedule(c.critic_lr_start, c.critic_lr_end, total)),
            "multiplier": Adam(
                self.multiplier.params,
                LinearSchedule(c.multiplier_lr_start, c.multiplier_lr_end, max(total // c.m_lambda, 1)),
            ),
            "alpha": Adam(self.temperature.params, LinearSchedule(c.alpha_lr_start, c.alpha_lr_end, max(total // c.m_pi, 1))),
        }

    def networks(self) -> dict:
        return {
            "policy": self.policy.net,
            "q1": self.q1.net,
            "q2": self.q2.net,
            "q1_target": self.q1_target.net,
            "q2_target": self.q2_target.net,
            "safety_critic": self.safety_critic.net,
            "multiplier": self.multiplier.net,
        }

    def act(self, obs, rng=None, deterministic=False):
        if deterministic:
            return self.policy.deterministic(obs)
        a, _ = self.policy.sample(obs, rng=rng)
        return a

    def multipliers(self, obs):
        if not self.config.lagrangian:
            return np.zeros(np.shape(obs)[:-1] + (self.n_constraints,))
        return self.multiplier(obs)


@dataclass
class MetricsRow:
    iteration: int
    env_steps: int
    mean_return: float
    mean_episode_cost: float
    violation_steps: int
    cost_rate: float
    cumulative_cost: float
    mean_multiplier: float
    max_multiplier: float
    alpha: float
    q_loss: float
    qc_loss: float
    policy_loss: float


METRICS_HEADER = [f.name for f in fields(MetricsRow)]


@dataclass
class UpdateCounts:
    gradient_steps: int = 0
    policy_updates: int = 0
    multiplier_updates: int = 0


def gradient_step(agent: Agent, buffer: ReplayBuffer, rng, counts: UpdateCounts) -> dict:
    """One pass of the inner loop. Returns the losses computed at this step."""
    cfg = agent.config
    counts.gradient_steps += 1
    k = counts.gradient_steps
    batch = buffer.sample(cfg.batch_size, rng)
    opt = agent.optimizers
    out = {}

    out["q"], g1, g2 = q_loss(
        agent.q1, agent.q2, agent.q1_target, agent.q2_target, agent.policy,
        agent.temperature.alpha, batch, cfg.gamma, rng=rng,
    )
    opt["q1"].step(g1)
    opt["q2"].step(g2)
    out["qc"], gc = qc_loss(agent.safety_critic, batch)
    opt["safety_critic"].step(gc)

    if k % cfg.m_pi == 0:
        if cfg.lagrangian:
            out["policy"], gp, logp = policy_loss(
                agent.policy, agent.q1, agent.q2, agent.temperature.alpha, batch.obs,
                agent.safety_critic, agent.multiplier, rng=rng,
            )
        else:
            out["policy"], gp, logp = policy_loss(
                agent.policy, agent.q1, agent.q2, agent.temperature.alpha, batch.obs, rng=rng
            )
        opt["policy"].step(gp)
        out["alpha"], ga = alpha_loss_from_log_probs(agent.temperature, logp)
        opt["alpha"].step(ga)
        counts.policy_updates += 1

    if cfg.lagrangian and k % cfg.m_lambda == 0:
        out["multiplier"], gm = multiplier_grad(
            agent.multiplier, agent.safety_critic, agent.policy, batch.obs, rng=rng,
            cost_floor=cfg.multiplier_cost_floor, logit_floor=cfg.multiplier_logit_floor,
        )
        opt["multiplier"].step([-g for g in gm])
        counts.multiplier_updates += 1

    bound = cfg.projection_bound
    if not math.isinf(bound):
        for net in (agent.policy, agent.q1, agent.q2, agent.safety_critic, agent.multiplier):
            project_params(net.params, bound)
    soft_update(agent.q1_target.params, agent.q1.params, cfg.tau)
    soft_update(agent.q2_target.params, agent.q2.params, cfg.tau)
    return out


def violation_count(env_config: EnvConfig, obs, params: SafetyIndexParams) -> int:
    """Number of hazards whose inflated region contains the agent (phi0 > 0)."""
    d = hazard_block(env_config, obs)[..., 0]
    return int(np.sum(phi0(d, params.d_min) > 0.0))


def n_constraints(env_config: EnvConfig) -> int:
    """One constraint per hazard; a hazard-free arena keeps a single slot whose cost is always 0."""
    return max(env_config.n_hazards, 1)


def make_transition(env_config, params, obs, action, result) -> Transition:
    if env_config.n_hazards == 0:
        cost, phi_s = np.zeros(1), np.zeros(1)
    else:
        phi_s = phi_from_pairs(result.distances_before, params)
        phi_next = phi_from_pairs(result.distances_after, params)
        cost = transition_cost(phi_s, phi_next, params.eta)
    return Transition(
        obs, action, result.reward, np.atleast_1d(cost), np.atleast_1d(phi_s),
        result.next_observation, result.goal_reached,
    )


def _nanmean(xs):
    return float(np.mean(xs)) if len(xs) else float("nan")


def train(
    env_config: EnvConfig,
    config: LearnerConfig,
    safety_params: SafetyIndexParams,
    rng: np.random.Generator,
    on_iteration: Callable[[MetricsRow, Agent], None] | None = None,
):
    """Run the full training loop. Returns ``(agent, metrics_rows)``.

    Costs are computed from the (d, d_dot) pairs carried by consecutive
    observations, never from a dynamics model.
    """
    if config.lagrangian is False:
        log.info("training unconstrained ablation (multiplier fixed at 0)")
    env = Nav2DEnv(env_config)
    nc = n_constraints(env_config)
    agent = Agent(env_config.obs_dim, env_config.action_dim, nc, config, rng)
    buffer = ReplayBuffer(config.buffer_capacity, env_config.obs_dim, env_config.action_dim, nc)
    counts = UpdateCounts()
    rows: list[MetricsRow] = []

    obs = env.reset(rng)
    ep_return, ep_cost = 0.0, 0
    env_steps, total_violations, cumulative_cost = 0, 0, 0.0

    for it in range(1, config.iterations + 1):
        returns, costs, visited = [], [], []
        it_violations = 0
        for _ in range(config.env_steps_per_iteration):
            if env_steps < config.warmup_steps:
                action = rng.uniform(-1.0, 1.0, size=env_config.action_dim)
            else:
                action = agent.act(obs, rng)
            result = env.step(action)
            buffer.push(make_transition(env_config, safety_params, obs, action, result))
            visited.append(obs)
            env_steps += 1
            v = violation_count(env_config, result.next_observation, safety_params)
            it_violations += v > 0
            cumulative_cost += v
            ep_return += result.reward
            ep_cost += v
            obs = result.next_observation
            if result.done:
                returns.append(ep_return)
                costs.append(ep_cost)
                obs = env.reset(rng)
                ep_return, ep_cost = 0.0, 0
        total_violations += it_violations

        losses = {"q": [], "qc": [], "policy": []}
        if len(buffer) >= config.batch_size:
            for _ in range(config.gradient_steps_per_iteration):
                try:
                    out = gradient_step(agent, buffer, rng, counts)
                except TrainingError as exc:
                    exc.snapshot = agent
                    exc.iteration = it
                    raise
                for key in losses:
                    if key in out:
                        losses[key].append(out[key])

        lam = agent.multipliers(np.asarray(visited))
        alpha = agent.temperature.alpha
        if not alpha > 0:
            raise TrainingError(f"temperature collapsed to {alpha}")
        row = MetricsRow(
            iteration=it,
            env_steps=env_steps,
            mean_return=_nanmean(returns),
            mean_episode_cost=_nanmean(costs),
            violation_steps=it_violations,
            cost_rate=total_violations / env_steps,
            cumulative_cost=cumulative_cost,
            mean_multiplier=float(np.mean(lam)),
            max_multiplier=float(np.max(lam)),
            alpha=alpha,
            q_loss=_nanmean(losses["q"]),
            qc_loss=_nanmean(losses["qc"]),
            policy_loss=_nanmean(losses["policy"]),
        )
        rows.append(row)
        log.debug("iteration %d: %s", it, row)
        if on_iteration is not None:
            on_iteration(row, agent)
    agent.update_counts = counts
    return agent, rows


@dataclass
class TrajectoryProbe:
    phi_max: list = field(default_factory=list)
    transition_cost: list = field(default_factory=list)
    in_safe_subset: list = field(default_factory=list)


@dataclass
class EpisodeReport:
    episode_return: float
    steps: int
    violation_steps: int
    max_phi0: float
    probe: TrajectoryProbe


def run_episode(agent: Agent, env: Nav2DEnv, params: SafetyIndexParams, obs, deterministic=True, rng=None) -> EpisodeReport:
    """Roll out one episode from the env's current state, recording safety probes."""
    probe = TrajectoryProbe()
    total, steps, violations, worst_phi0 = 0.0, 0, 0, -np.inf
    cfg = env.config
    while True:
        action = agent.act(obs, rng=rng, deterministic=deterministic)
        result = env.step(action)
        phi_s = phi_from_pairs(result.distances_before, params)
        phi_next = phi_from_pairs(result.distances_after, params)
        cost = transition_cost(phi_s, phi_next, params.eta)
        d_next = result.distances_after[:, 0]
        probe.phi_max.append(float(np.max(phi_next)) if cfg.n_hazards else float("-inf"))
        probe.transition_cost.append(float(np.max(cost)) if cfg.n_hazards else float("-inf"))
        probe.in_safe_subset.append(bool(np.all(phi_next <= 0.0) and np.all(phi0(d_next, params.d_min) <= 0.0)))
        p0 = phi0(d_next, params.d_min)
        violations += bool(np.any(p0 > 0.0))
        if cfg.n_hazards:
            worst_phi0 = max(worst_phi0, float(np.max(p0)))
        total += result.reward
        steps += 1
        obs = result.next_observation
        if result.done:
            return EpisodeReport(total, steps, violations, worst_phi0, probe)


def evaluate(agent: Agent, env_config: EnvConfig, params: SafetyIndexParams, episodes: int, rng, deterministic=True):
    env = Nav2DEnv(env_config)
    return [run_episode(agent, env, params, env.reset(rng), deterministic, rng) for _ in range(episodes)]


def config_dict(config: LearnerConfig) -> dict:
    return asdict(config)
