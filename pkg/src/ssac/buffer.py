from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    observation: np.ndarray
    action: np.ndarray
    reward: float
    cost: np.ndarray  # one transition cost per hazard
    phi: np.ndarray  # safety index per hazard at the source state
    next_observation: np.ndarray
    done: bool


@dataclass
class Batch:
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    cost: np.ndarray
    phi: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray

    def __len__(self):
        return len(self.reward)


class ReplayBuffer:
    """Fixed-capacity FIFO ring; uniform sampling with replacement."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int, n_constraints: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros((capacity, action_dim))
        self.reward = np.zeros(capacity)
        self.cost = np.zeros((capacity, n_constraints))
        self.phi = np.zeros((capacity, n_constraints))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, t: Transition) -> None:
        i = self.cursor
        self.obs[i] = t.observation
        self.action[i] = t.action
        self.reward[i] = t.reward
        self.cost[i] = t.cost
        self.phi[i] = t.phi
        self.next_obs[i] = t.next_observation
        self.done[i] = float(t.done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def take(self, idx) -> Batch:
        return Batch(
            self.obs[idx], self.action[idx], self.reward[idx], self.cost[idx],
            self.phi[idx], self.next_obs[idx], self.done[idx],
        )

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        return self.take(rng.integers(0, self.size, size=n))
