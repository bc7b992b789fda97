"""Transition records and the fixed-capacity replay buffer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from aerie.errors import UsageError


@dataclass(frozen=True)
class Transition:
    """One joint step: states, per-agent observations and actions, shared reward.

    ``state`` is the service state the agents report; ``ideal_state`` is the
    one computed from true positions.
    """

    state: np.ndarray
    ideal_state: np.ndarray
    observations: np.ndarray
    actions: np.ndarray
    reward: float
    next_state: np.ndarray
    next_ideal_state: np.ndarray
    next_observations: np.ndarray
    done: bool = False

    def __post_init__(self):
        if not np.isfinite(self.reward):
            raise UsageError(f"transition reward must be finite, got {self.reward}")


@dataclass(frozen=True)
class Batch:
    state: np.ndarray
    ideal_state: np.ndarray
    observations: np.ndarray
    actions: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray
    next_ideal_state: np.ndarray
    next_observations: np.ndarray
    done: np.ndarray

    def __len__(self) -> int:
        return self.reward.shape[0]


_FIELDS = (
    "state",
    "ideal_state",
    "observations",
    "actions",
    "reward",
    "next_state",
    "next_ideal_state",
    "next_observations",
    "done",
)


class ReplayBuffer:
    """Ring storage with FIFO eviction once ``capacity`` transitions are held."""

    def __init__(self, capacity: int, state_dim: int, num_agents: int, obs_dim: int, min_fill: int = 0):
        if capacity <= 0:
            raise UsageError(f"replay capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self.min_fill = int(min_fill)
        self._shapes = {
            "state": (state_dim,),
            "ideal_state": (state_dim,),
            "observations": (num_agents, obs_dim),
            "actions": (num_agents,),
            "reward": (),
            "next_state": (state_dim,),
            "next_ideal_state": (state_dim,),
            "next_observations": (num_agents, obs_dim),
            "done": (),
        }
        self._data = {
            name: np.zeros((self.capacity,) + shape, dtype=self._dtype(name))
            for name, shape in self._shapes.items()
        }
        self._next = 0
        self._size = 0

    @staticmethod
    def _dtype(name: str):
        if name == "actions":
            return np.int64
        if name == "done":
            return bool
        return float

    def __len__(self) -> int:
        return self._size

    @property
    def ready(self) -> bool:
        """True once the buffer holds enough transitions to start training."""
        return self._size >= max(self.min_fill, 1)

    def push(self, transition: Transition) -> None:
        slot = self._next
        for name in _FIELDS:
            value = np.asarray(getattr(transition, name))
            if value.shape != self._shapes[name]:
                raise UsageError(f"transition field {name} has shape {value.shape}, expected {self._shapes[name]}")
            self._data[name][slot] = value
        self._next = (slot + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform minibatch without replacement (with replacement if the buffer is smaller)."""
        if self._size == 0:
            raise UsageError("cannot sample from an empty replay buffer")
        replace = batch_size > self._size
        index = rng.choice(self._size, size=batch_size, replace=replace)
        return Batch(**{name: self._data[name][index].copy() for name in _FIELDS})

    def oldest(self) -> Optional[Transition]:
        if self._size == 0:
            return None
        slot = self._next if self._size == self.capacity else 0
        return Transition(**{name: self._item(name, slot) for name in _FIELDS})

    def _item(self, name: str, slot: int):
        value = self._data[name][slot]
        if name == "reward":
            return float(value)
        if name == "done":
            return bool(value)
        return value.copy()
