"""Losses of the safe set actor-critic and their analytic gradients.

Every function takes the Gaussian noise ``eps`` explicitly (or draws it from
``rng``), so gradients can be checked against finite differences with common
random numbers. Returned gradients are aligned with the ``params`` list of the
network being trained.
"""

from __future__ import annotations

import numpy as np

from .buffer import Batch
from .networks import MultiplierNet, PolicyNet, StateActionNet, Temperature, squash_backward, squash_sample
from .nn import TrainingError


def _noise(shape, rng, eps):
    if eps is not None:
        return eps
    if rng is None:
        raise ValueError("either rng or eps must be given")
    return rng.standard_normal(shape)


def _finite(value, name):
    if not np.isfinite(value):
        raise TrainingError(f"non-finite {name}: {value}")
    return float(value)


def q_loss(q1, q2, q1_target, q2_target, policy: PolicyNet, alpha: float, batch: Batch, gamma: float, rng=None, eps=None):
    """Soft Bellman regression for both critics against a shared frozen target.

    y = r + gamma * (1 - done) * (min target Q(s', a') - alpha * log pi(a'|s')).
    Returns ``(loss, grads_q1, grads_q2)`` with loss = sum of the two halved MSEs.
    """
    eps = _noise((len(batch), policy.action_dim), rng, eps)
    a_next, logp_next = policy.sample(batch.next_obs, eps=eps)
    q_next = np.minimum(q1_target(batch.next_obs, a_next)[:, 0], q2_target(batch.next_obs, a_next)[:, 0])
    y = batch.reward + gamma * (1.0 - batch.done) * (q_next - alpha * logp_next)
    n = len(batch)
    loss = 0.0
    grads = []
    for q in (q1, q2):
        pred, cache = q(batch.obs, batch.action, return_cache=True)
        err = pred[:, 0] - y
        loss += 0.5 * np.mean(err**2)
        _, g = q.backward(cache, (err / n)[:, None])
        grads.append(g)
    return _finite(loss, "q loss"), grads[0], grads[1]


def qc_loss(safety_critic: StateActionNet, batch: Batch):
    """Zero-discount regression of the safety-index transition onto observed costs."""
    pred, cache = safety_critic(batch.obs, batch.action, return_cache=True)
    err = pred - batch.cost
    loss = 0.5 * np.mean(err**2)
    _, grads = safety_critic.backward(cache, err / err.size)
    return _finite(loss, "safety critic loss"), grads


def policy_loss(
    policy: PolicyNet,
    q1: StateActionNet,
    q2: StateActionNet,
    alpha: float,
    obs: np.ndarray,
    safety_critic: StateActionNet | None = None,
    multiplier: MultiplierNet | None = None,
    rng=None,
    eps=None,
):
    """mean[alpha log pi - min Q + sum_i lambda_i(s) Qc_i(s, a)] with a reparameterized.

    Gradients flow through the action into the critics but never into the
    multiplier or alpha. Without ``multiplier`` this is the unconstrained loss.
    Returns ``(loss, grads, log_prob)``.
    """
    n = len(obs)
    mu, log_std, pcache = policy.distribution(obs, return_cache=True)
    eps = _noise(mu.shape, rng, eps)
    a, logp = squash_sample(mu, log_std, eps)

    v1, c1 = q1(obs, a, return_cache=True)
    v2, c2 = q2(obs, a, return_cache=True)
    pick1 = v1[:, 0] <= v2[:, 0]
    qmin = np.where(pick1, v1[:, 0], v2[:, 0])
    g_q = -np.ones(n) / n
    ga1, _ = q1.backward(c1, (g_q * pick1)[:, None])
    ga2, _ = q2.backward(c2, (g_q * ~pick1)[:, None])
    g_action = ga1 + ga2
    per_sample = alpha * logp - qmin

    if multiplier is not None:
        lam = multiplier(obs)
        qc, cc = safety_critic(obs, a, return_cache=True)
        per_sample = per_sample + np.sum(lam * qc, axis=1)
        gac, _ = safety_critic.backward(cc, lam / n)
        g_action = g_action + gac

    loss = float(np.mean(per_sample))
    g_mu, g_log_std = squash_backward(log_std, eps, a, g_action, np.full(n, alpha / n))
    _, grads = policy.backward(pcache, g_mu, g_log_std)
    return _finite(loss, "policy loss"), grads, logp


def multiplier_grad(
    multiplier: MultiplierNet,
    safety_critic: StateActionNet,
    policy: PolicyNet,
    obs: np.ndarray,
    rng=None,
    eps=None,
    cost_floor=np.inf,
    logit_floor=-np.inf,
):
    """Objective mean[sum_i lambda_i(s) Qc_i(s, a)], a ~ pi(.|s), and its gradient in xi.

    With a finite ``cost_floor`` the critic output is clipped below at
    ``-cost_floor``; the sign of every constraint, and so the feasible set, is
    unchanged. States whose softplus input is already below ``logit_floor``
    receive no further downward push, which projects each multiplier onto
    ``lambda >= softplus(logit_floor)`` instead of letting it saturate where its
    gradient vanishes. The gradient is an ascent direction. Returns
    ``(objective, grads)``.
    """
    a, _ = policy.sample(obs, rng=rng, eps=eps)
    qc = np.maximum(safety_critic(obs, a), -cost_floor)
    lam, cache = multiplier(obs, return_cache=True)
    objective = float(np.mean(np.sum(lam * qc, axis=1)))
    g_lam = qc / len(obs)
    g_lam[(cache[1] < logit_floor) & (g_lam < 0)] = 0.0
    _, grads = multiplier.backward(cache, g_lam)
    return _finite(objective, "multiplier objective"), grads


def alpha_loss_from_log_probs(temperature: Temperature, log_probs: np.ndarray):
    """mean[-alpha (log pi + target_entropy)], log pi held constant; grad wrt log alpha."""
    gap = float(np.mean(log_probs)) + temperature.target_entropy
    alpha = temperature.alpha
    return _finite(-alpha * gap, "alpha loss"), [np.array([-alpha * gap])]


def alpha_loss(temperature: Temperature, policy: PolicyNet, obs: np.ndarray, rng=None, eps=None):
    _, logp = policy.sample(obs, rng=rng, eps=eps)
    return alpha_loss_from_log_probs(temperature, logp)
