"""Policy, critics, safety critic, multiplier net and temperature."""

from __future__ import annotations

import numpy as np

from .nn import Mlp, mlp_init

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def squash_sample(mu, log_std, eps):
    """Reparameterized tanh-Gaussian sample.

    Returns ``(action, log_prob)``; ``log_prob`` is summed over action dims and
    includes the tanh change-of-variables correction.
    """
    std = np.exp(log_std)
    u = mu + std * eps
    a = np.tanh(u)
    gauss = -0.5 * eps**2 - log_std - _HALF_LOG_2PI
    log_prob = np.sum(gauss - np.log(1.0 - a**2 + SQUASH_EPS), axis=-1)
    return a, log_prob


def squash_backward(log_std, eps, action, g_action, g_log_prob):
    """Cotangents on (mu, log_std) given cotangents on action and log_prob (eps held fixed)."""
    one_minus = 1.0 - action**2
    g_lp = np.asarray(g_log_prob)[..., None]
    g_u = g_action * one_minus + g_lp * (2.0 * action * one_minus / (one_minus + SQUASH_EPS))
    g_mu = g_u
    g_log_std = g_u * np.exp(log_std) * eps - g_lp
    return g_mu, g_log_std


class PolicyNet:
    """Squashed Gaussian policy: trunk outputs mean and log-std per action dim."""

    def __init__(self, obs_dim: int, action_dim: int, hidden=(64, 64), rng=None, net: Mlp | None = None):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.net = net if net is not None else mlp_init([obs_dim, *hidden, 2 * action_dim], rng)

    @property
    def params(self):
        return self.net.params

    def distribution(self, obs, return_cache=False):
        out, cache = self.net.forward(obs, return_cache=True)
        mu = out[..., : self.action_dim]
        raw = out[..., self.action_dim :]
        log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        if return_cache:
            inside = (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)
            return mu, log_std, (cache, inside)
        return mu, log_std

    def sample(self, obs, rng=None, eps=None):
        mu, log_std = self.distribution(obs)
        if eps is None:
            eps = rng.standard_normal(mu.shape)
        return squash_sample(mu, log_std, eps)

    def deterministic(self, obs):
        mu, _ = self.distribution(obs)
        return np.tanh(mu)

    def backward(self, cache, g_mu, g_log_std):
        net_cache, inside = cache
        g_out = np.concatenate([g_mu, g_log_std * inside], axis=-1)
        return self.net.backward(net_cache, g_out)


class StateActionNet:
    """Mlp on the concatenation (observation, action)."""

    def __init__(self, obs_dim: int, action_dim: int, out_dim: int, hidden=(64, 64), rng=None, net: Mlp | None = None):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.net = net if net is not None else mlp_init([obs_dim + action_dim, *hidden, out_dim], rng)

    @property
    def params(self):
        return self.net.params

    def copy(self):
        return type(self)(self.obs_dim, self.action_dim, self.net.n_out, net=self.net.copy())

    def __call__(self, obs, action, return_cache=False):
        x = np.concatenate([obs, action], axis=-1)
        return self.net.forward(x, return_cache=return_cache)

    def backward(self, cache, g_out):
        """Returns (grad wrt action, parameter grads)."""
        g_in, grads = self.net.backward(cache, g_out)
        return g_in[..., self.obs_dim :], grads


class MultiplierNet:
    """State-dependent Lagrange multipliers, one per constraint, kept >= 0 by softplus."""

    def __init__(self, obs_dim: int, n_constraints: int, hidden=(64, 64), rng=None, net: Mlp | None = None):
        self.net = net if net is not None else mlp_init([obs_dim, *hidden, n_constraints], rng)

    @property
    def params(self):
        return self.net.params

    def __call__(self, obs, return_cache=False):
        raw, cache = self.net.forward(obs, return_cache=True)
        lam = softplus(raw)
        if return_cache:
            return lam, (cache, raw)
        return lam

    def backward(self, cache, g_lam):
        net_cache, raw = cache
        return self.net.backward(net_cache, g_lam * sigmoid(raw))


class Temperature:
    """Entropy coefficient alpha = exp(log_alpha)."""

    def __init__(self, log_alpha: float = 0.0, target_entropy: float = -2.0):
        self.params = [np.array([float(log_alpha)])]
        self.target_entropy = float(target_entropy)

    @property
    def log_alpha(self) -> float:
        return float(self.params[0][0])

    @property
    def alpha(self) -> float:
        return float(np.exp(self.params[0][0]))
