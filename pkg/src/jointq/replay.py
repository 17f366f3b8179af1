"""Fixed-capacity FIFO experience buffer with uniform with-replacement sampling."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from jointq.selectors import JointAction


@dataclass(eq=False)
class Transition:
    """One environment step: (s, s', a, reward vector, terminal flag)."""

    state: np.ndarray
    next_state: np.ndarray
    action: JointAction
    rewards: np.ndarray
    terminal: bool

    def __post_init__(self) -> None:
        self.state = np.asarray(self.state, dtype=np.float64)
        self.next_state = np.asarray(self.next_state, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        if self.state.shape != self.next_state.shape:
            raise ValueError(
                f"state shape {self.state.shape} != next_state shape {self.next_state.shape}"
            )
        if len(self.rewards) != len(self.action):
            raise ValueError("one reward per agent required")
        for arr in (self.state, self.next_state, self.rewards):
            if not np.all(np.isfinite(arr)):
                raise ValueError("transition contains non-finite values")


class ReplayBuffer:
    """Ordered transition store; oldest entries are evicted first.

    ``min_fill`` gates sampling: until that many transitions are stored
    (and at least ``batch_size`` when the gate is active), :meth:`sample`
    returns None and the caller skips its training step.  ``min_fill=0``
    disables the gate entirely.

    Single-owner: one training loop mutates a buffer; reads and writes are
    never interleaved across threads.
    """

    def __init__(self, capacity: int = 10_000, min_fill: int = 200):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        if min_fill < 0:
            raise ValueError("min_fill cannot be negative")
        self.capacity = capacity
        self.min_fill = min_fill
        self._storage: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._storage)

    def push(self, t: Transition) -> None:
        if not isinstance(t, Transition):
            raise ValueError(f"expected a Transition, got {type(t).__name__}")
        self._storage.append(t)

    def is_ready(self, batch_size: int) -> bool:
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if len(self._storage) == 0:
            return False
        if self.min_fill == 0:
            return True
        return len(self._storage) >= max(self.min_fill, batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator):
        """batch_size transitions drawn uniformly with replacement, or None if not ready."""
        if not self.is_ready(batch_size):
            return None
        picks = rng.integers(0, len(self._storage), size=batch_size)
        return [self._storage[int(i)] for i in picks]

    def contents(self) -> list[Transition]:
        """Snapshot in insertion order (oldest first)."""
        return list(self._storage)
