"""Dense ELU networks with hand-written backprop, Adam and a finite-difference oracle.

Everything runs in float64. Parameters of an :class:`Mlp` are exposed as a flat
list ``[W0, b0, W1, b1, ...]`` and every gradient is a list of arrays aligned with
it, so optimizers and checks never need to know the layer structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

GradBundle = list  # list[np.ndarray], aligned with Mlp.params


class ConfigurationError(ValueError):
    """Raised for invalid static configuration (sizes, ranges, files)."""


class TrainingError(RuntimeError):
    """Raised when an update produces non-finite values."""


def elu(x):
    x = np.asarray(x, dtype=np.float64)
    # expm1(x) > x for x < 0, so the max picks the right branch everywhere.
    return np.maximum(x, np.expm1(np.minimum(x, 0.0)))


def elu_prime(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, 1.0, np.exp(np.minimum(x, 0.0)))


class Mlp:
    """Feed-forward net: affine + ELU on hidden layers, linear output.

    ``weights[l]`` has shape ``(layer_sizes[l+1], layer_sizes[l])``. Inputs may be a
    single vector or a ``(batch, in)`` matrix.
    """

    def __init__(self, layer_sizes: Sequence[int], weights=None, biases=None):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ConfigurationError(
                f"layer_sizes needs at least two positive entries, got {list(layer_sizes)}"
            )
        self.layer_sizes = sizes
        if weights is None:
            weights = [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])]
        if biases is None:
            biases = [np.zeros(o) for o in sizes[1:]]
        self.params: list[np.ndarray] = []
        for i, o, w, b in zip(sizes[:-1], sizes[1:], weights, biases):
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if w.shape != (o, i) or b.shape != (o,):
                raise ConfigurationError(
                    f"layer {i}->{o}: got weight {w.shape}, bias {b.shape}"
                )
            self.params += [w, b]

    @property
    def weights(self) -> list[np.ndarray]:
        return self.params[0::2]

    @property
    def biases(self) -> list[np.ndarray]:
        return self.params[1::2]

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "Mlp":
        return Mlp(self.layer_sizes, self.weights, self.biases)

    def zeros_like(self) -> GradBundle:
        return [np.zeros_like(p) for p in self.params]

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x, return_cache: bool = False):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.n_in:
            raise ValueError(f"expected input width {self.n_in}, got shape {x.shape}")
        inputs, pre = [], []
        n_layers = len(self.layer_sizes) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w.T + b
            pre.append(z)
            h = elu(z) if layer < n_layers - 1 else z
        out = h[0] if single else h
        if return_cache:
            return out, (single, inputs, pre)
        return out

    def backward(self, cache, grad_out):
        """Reverse-mode pass. Returns ``(grad_input, grads)`` for the cached forward."""
        single, inputs, pre = cache
        g = np.asarray(grad_out, dtype=np.float64)
        g = g[None, :] if single else g
        if g.shape != pre[-1].shape:
            raise ValueError(f"cotangent shape {g.shape} != output shape {pre[-1].shape}")
        grads: GradBundle = [None] * len(self.params)
        for layer in range(len(inputs) - 1, -1, -1):
            if layer < len(inputs) - 1:
                # elu'(z) = min(elu(z) + 1, 1); the activation is the next layer's input.
                g = g * np.minimum(inputs[layer + 1] + 1.0, 1.0)
            grads[2 * layer] = g.T @ inputs[layer]
            grads[2 * layer + 1] = g.sum(axis=0)
            g = g @ self.weights[layer]
        return (g[0] if single else g), grads


def mlp_init(layer_sizes: Sequence[int], rng_seed) -> Mlp:
    """Uniform fan-in init, W ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)], zero biases."""
    net = Mlp(layer_sizes)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    for w in net.weights:
        bound = 1.0 / np.sqrt(w.shape[1])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return net


def finite_diff_grad(loss_fn: Callable[[], float], params: Sequence[np.ndarray], h: float = 1e-5) -> GradBundle:
    """Central differences of ``loss_fn()`` with respect to every entry of ``params``.

    ``params`` are perturbed in place and restored; ``loss_fn`` must read them.
    Pass ``net.params`` (or several nets' params concatenated) to check a net.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_fn()
            flat[i] = old - h
            down = loss_fn()
            flat[i] = old
            gflat[i] = (up - down) / (2.0 * h)
        out.append(g)
    return out


def max_relative_error(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray]) -> float:
    """Largest absolute mismatch, scaled by the largest gradient magnitude in the bundle."""
    diff = max((np.max(np.abs(a - n)) for a, n in zip(analytic, numeric)), default=0.0)
    scale = max(
        (max(np.max(np.abs(a)), np.max(np.abs(n))) for a, n in zip(analytic, numeric)),
        default=0.0,
    )
    return float(diff / max(scale, 1e-12))


@dataclass
class LinearSchedule:
    """Linear annealing from ``start`` at update 1 to ``end`` at update ``horizon``."""

    start: float
    end: float
    horizon: int

    def __post_init__(self):
        if self.start <= 0 or self.end <= 0:
            raise ConfigurationError("learning rates must be positive")
        if self.horizon < 1:
            raise ConfigurationError("annealing horizon must be >= 1")

    def __call__(self, step: int) -> float:
        if self.horizon == 1:
            return self.end if step >= 1 else self.start
        frac = min(max(step - 1, 0) / (self.horizon - 1), 1.0)
        return self.start + (self.end - self.start) * frac


@dataclass
class AdamState:
    first_moment: list
    second_moment: list
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


@dataclass
class Adam:
    """Adam with bias correction and a linearly annealed learning rate.

    ``step`` descends; pass negated gradients for ascent.
    """

    params: list
    schedule: LinearSchedule
    state: AdamState = field(default=None)

    def __post_init__(self):
        if self.state is None:
            self.state = AdamState.for_params(self.params)

    @property
    def learning_rate(self) -> float:
        return self.schedule(self.state.step_count + 1)

    def step(self, grads: Sequence[np.ndarray]) -> None:
        adam_step(self.params, grads, self.state, self.schedule)


def adam_step(params, grads, state: AdamState, schedule: LinearSchedule) -> None:
    if len(grads) != len(params):
        raise ValueError("gradient bundle does not match parameters")
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient passed to Adam")
    state.step_count += 1
    t = state.step_count
    lr = schedule(t)
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def project_params(params: Sequence[np.ndarray], bound: float) -> None:
    """Clamp every parameter entry into [-bound, bound] in place; inf disables."""
    if not bound > 0:
        raise ValueError("projection bound must be positive")
    if np.isinf(bound):
        return
    for p in params:
        np.clip(p, -bound, bound, out=p)


def soft_update(target_params, online_params, tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, in place."""
    for t, o in zip(target_params, online_params):
        if t.shape != o.shape:
            raise ValueError(f"shape mismatch {t.shape} vs {o.shape}")
        t *= 1.0 - tau
        t += tau * o
