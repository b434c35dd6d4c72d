"""Verification entry points shared by the CLI and the test suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .buffer import Batch
from .env import EnvConfig, Nav2DEnv
from .learner import Agent, run_episode
from .losses import alpha_loss, multiplier_grad, policy_loss, q_loss, qc_loss
from .networks import MultiplierNet, PolicyNet, StateActionNet, Temperature
from .nn import finite_diff_grad, max_relative_error
from .safety import SafetyIndexParams, sample_safe_subset_state

GRADIENT_TOLERANCE = 1e-4
LOSSES = ("q", "qc", "policy", "multiplier", "alpha")


def random_problem(seed: int, obs_dim=8, action_dim=2, n_constraints=1, hidden=(16, 16), batch_size=4):
    """Fresh small nets, a random batch and frozen noise for one gradient check."""
    rng = np.random.default_rng(seed)
    nets = dict(
        policy=PolicyNet(obs_dim, action_dim, hidden, rng),
        q1=StateActionNet(obs_dim, action_dim, 1, hidden, rng),
        q2=StateActionNet(obs_dim, action_dim, 1, hidden, rng),
        qc=StateActionNet(obs_dim, action_dim, n_constraints, hidden, rng),
        multiplier=MultiplierNet(obs_dim, n_constraints, hidden, rng),
        temperature=Temperature(rng.normal(scale=0.5), -float(action_dim)),
    )
    nets["q1_target"] = nets["q1"].copy()
    nets["q2_target"] = nets["q2"].copy()
    for p in nets["q1_target"].params + nets["q2_target"].params:
        p += rng.normal(scale=0.1, size=p.shape)
    b = batch_size
    batch = Batch(
        obs=rng.normal(size=(b, obs_dim)),
        action=np.tanh(rng.normal(size=(b, action_dim))),
        reward=rng.normal(size=b),
        cost=rng.normal(size=(b, n_constraints)),
        phi=rng.normal(size=(b, n_constraints)),
        next_obs=rng.normal(size=(b, obs_dim)),
        done=(rng.uniform(size=b) < 0.3).astype(float),
    )
    eps = rng.normal(size=(b, action_dim))
    return nets, batch, eps


def gradient_errors(seed: int, h: float = 1e-5, **kw) -> dict:
    """Max relative error between analytic and central-difference gradients, per loss."""
    n, batch, eps = random_problem(seed, **kw)
    pol, q1, q2, qc, lam, temp = n["policy"], n["q1"], n["q2"], n["qc"], n["multiplier"], n["temperature"]
    alpha, gamma = temp.alpha, 0.99
    out = {}

    def q_fn():
        return q_loss(q1, q2, n["q1_target"], n["q2_target"], pol, alpha, batch, gamma, eps=eps)

    _, g1, g2 = q_fn()
    out["q"] = max_relative_error(g1 + g2, finite_diff_grad(lambda: q_fn()[0], q1.params + q2.params, h))

    _, g = qc_loss(qc, batch)
    out["qc"] = max_relative_error(g, finite_diff_grad(lambda: qc_loss(qc, batch)[0], qc.params, h))

    def pi_fn():
        return policy_loss(pol, q1, q2, alpha, batch.obs, qc, lam, eps=eps)

    out["policy"] = max_relative_error(pi_fn()[1], finite_diff_grad(lambda: pi_fn()[0], pol.params, h))

    def lam_fn():
        return multiplier_grad(lam, qc, pol, batch.obs, eps=eps)

    out["multiplier"] = max_relative_error(lam_fn()[1], finite_diff_grad(lambda: lam_fn()[0], lam.params, h))

    def alpha_fn():
        return alpha_loss(temp, pol, batch.obs, eps=eps)

    out["alpha"] = max_relative_error(alpha_fn()[1], finite_diff_grad(lambda: alpha_fn()[0], temp.params, h))
    return out


def gradient_suite(seeds, **kw) -> dict:
    worst = dict.fromkeys(LOSSES, 0.0)
    for s in seeds:
        for name, err in gradient_errors(s, **kw).items():
            worst[name] = max(worst[name], err)
    return worst


@dataclass
class InvarianceReport:
    start_states: int
    escapes: int
    total_steps: int
    max_phi0: float
    escaped_from: list

    @property
    def passed(self) -> bool:
        return self.escapes == 0


def invariance_check(agent: Agent, env_config: EnvConfig, params: SafetyIndexParams, n_states: int, rng, deterministic=True) -> InvarianceReport:
    """Roll out full episodes from states sampled in the safe subset; count any phi0 > 0 step."""
    env = Nav2DEnv(env_config)
    escapes, steps, max_phi0, escaped = 0, 0, -np.inf, []
    for _ in range(n_states):
        s = sample_safe_subset_state(env_config, params, rng)
        obs = env.reset_to(s.position, s.velocity)
        rep = run_episode(agent, env, params, obs, deterministic=deterministic, rng=rng)
        steps += rep.steps
        max_phi0 = max(max_phi0, rep.max_phi0)
        if rep.violation_steps:
            escapes += 1
            escaped.append((s.position.tolist(), s.velocity.tolist()))
    return InvarianceReport(n_states, escapes, steps, float(max_phi0), escaped)
