"""Versioned ``.npz`` checkpoints.

Layout (format ``ssac-checkpoint``, version 1):

* ``meta`` -- JSON string: format, version, config_text, config_hash, obs_dim,
  action_dim, n_constraints, layer sizes per network, update counts and the
  bit-generator state of the training RNG.
* ``net/<name>/<i>`` -- i-th parameter array (W0, b0, W1, b1, ...) of each network
  (policy, q1, q2, q1_target, q2_target, safety_critic, multiplier).
* ``log_alpha`` -- shape (1,).
* ``adam/<name>/m/<i>``, ``adam/<name>/v/<i>``, ``adam/<name>/step`` -- optimizer
  moments and step counts (policy, q1, q2, safety_critic, multiplier, alpha).

The replay buffer is not stored.
"""

from __future__ import annotations

import json

import numpy as np

from .config import RunConfig, parse_config
from .learner import Agent, n_constraints
from .nn import ConfigurationError

FORMAT = "ssac-checkpoint"
VERSION = 1


def save_checkpoint(path, agent: Agent, config: RunConfig, rng: np.random.Generator | None = None, extra: dict | None = None):
    arrays = {}
    for name, net in agent.networks().items():
        for i, p in enumerate(net.params):
            arrays[f"net/{name}/{i}"] = p
    arrays["log_alpha"] = agent.temperature.params[0]
    for name, opt in agent.optimizers.items():
        for i, (m, v) in enumerate(zip(opt.state.first_moment, opt.state.second_moment)):
            arrays[f"adam/{name}/m/{i}"] = m
            arrays[f"adam/{name}/v/{i}"] = v
        arrays[f"adam/{name}/step"] = np.array(opt.state.step_count)
    counts = getattr(agent, "update_counts", None)
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "config_text": config.to_text(),
        "config_hash": config.digest(),
        "obs_dim": agent.obs_dim,
        "action_dim": agent.action_dim,
        "n_constraints": agent.n_constraints,
        "layer_sizes": {name: net.layer_sizes for name, net in agent.networks().items()},
        "update_counts": vars(counts) if counts is not None else None,
        "rng_state": rng.bit_generator.state if rng is not None else None,
        **(extra or {}),
    }
    arrays["meta"] = np.array(json.dumps(meta, default=int))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Returns ``(agent, config, meta)``."""
    with np.load(path, allow_pickle=False) as data:
        if "meta" not in data:
            raise ConfigurationError(f"{path}: not an ssac checkpoint (no meta record)")
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != FORMAT:
            raise ConfigurationError(f"{path}: unexpected format {meta.get('format')!r}")
        if meta.get("version") != VERSION:
            raise ConfigurationError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        config = parse_config(meta["config_text"], f"{path}[meta]")
        env = config.env
        if (env.obs_dim, env.action_dim, n_constraints(env)) != (meta["obs_dim"], meta["action_dim"], meta["n_constraints"]):
            raise ConfigurationError(f"{path}: stored config does not match network dimensions")
        agent = Agent(env.obs_dim, env.action_dim, n_constraints(env), config.learner, np.random.default_rng(0))
        for name, net in agent.networks().items():
            if net.layer_sizes != meta["layer_sizes"][name]:
                raise ConfigurationError(f"{path}: {name} has layer sizes {meta['layer_sizes'][name]}, config implies {net.layer_sizes}")
            for i, p in enumerate(net.params):
                p[...] = data[f"net/{name}/{i}"]
        agent.temperature.params[0][...] = data["log_alpha"]
        for name, opt in agent.optimizers.items():
            for i, (m, v) in enumerate(zip(opt.state.first_moment, opt.state.second_moment)):
                m[...] = data[f"adam/{name}/m/{i}"]
                v[...] = data[f"adam/{name}/v/{i}"]
            opt.state.step_count = int(data[f"adam/{name}/step"])
    return agent, config, meta
