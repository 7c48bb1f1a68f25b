"""Experience stores: the DDPG ring buffer and the (state, optimal action) buffer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBuffer
from .network import Minibatch
from .numerics import Rng


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    d: float

    def __post_init__(self) -> None:
        if self.d not in (0, 1):
            raise ValueError(f"done flag must be 0 or 1, got {self.d}")


class TransitionBuffer:
    """Fixed-capacity FIFO ring buffer stored as preallocated arrays.

    Rows are allocated lazily in chunks so that a 10**6 capacity does not
    cost memory until it is used.
    """

    def __init__(self, capacity: int, state_dim: int, action_dim: int) -> None:
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.size = 0
        self.cursor = 0
        self._alloc(min(capacity, 4096))

    def _alloc(self, rows: int) -> None:
        old = getattr(self, "s", None)
        s = np.zeros((rows, self.state_dim))
        a = np.zeros((rows, self.action_dim))
        r = np.zeros(rows)
        s2 = np.zeros((rows, self.state_dim))
        d = np.zeros(rows)
        if old is not None:
            n = old.shape[0]
            s[:n], a[:n], r[:n], s2[:n], d[:n] = self.s, self.a, self.r, self.s_next, self.d
        self.s, self.a, self.r, self.s_next, self.d = s, a, r, s2, d

    def __len__(self) -> int:
        return self.size

    def push(self, s, a, r: float, s_next, d: float) -> None:
        if self.cursor >= self.s.shape[0]:
            self._alloc(min(self.capacity, 2 * self.s.shape[0]))
        i = self.cursor
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.d[i] = d
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def push_transition(self, t: Transition) -> None:
        self.push(t.s, t.a, t.r, t.s_next, t.d)

    def _ordered_indices(self) -> np.ndarray:
        if self.size < self.capacity:
            return np.arange(self.size)
        return (self.cursor + np.arange(self.capacity)) % self.capacity

    def items(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        return [
            Transition(self.s[i].copy(), self.a[i].copy(), float(self.r[i]),
                       self.s_next[i].copy(), float(self.d[i]))
            for i in self._ordered_indices()
        ]

    def gather(self, idx: np.ndarray) -> Minibatch:
        return Minibatch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.d[idx])

    def sample(self, rng: Rng, n: int) -> Minibatch:
        """Uniform draw of ``n`` rows with replacement."""
        if self.size == 0:
            raise EmptyBuffer("cannot sample from an empty buffer")
        return self.gather(rng.integers(0, self.size, size=n))

    def arrays(self) -> tuple[np.ndarray, ...]:
        """Occupied storage in slot order (for checkpointing)."""
        n = self.size
        return self.s[:n], self.a[:n], self.r[:n], self.s_next[:n], self.d[:n]

    @classmethod
    def from_arrays(cls, capacity: int, cursor: int, s, a, r, s_next, d) -> "TransitionBuffer":
        buf = cls(capacity, s.shape[1], a.shape[1])
        n = r.shape[0]
        buf._alloc(max(n, buf.s.shape[0]))
        buf.s[:n], buf.a[:n], buf.r[:n], buf.s_next[:n], buf.d[:n] = s, a, r, s_next, d
        buf.size = n
        buf.cursor = cursor
        return buf


def sample_minibatch(buffer: TransitionBuffer, rng: Rng, n: int) -> Minibatch:
    return buffer.sample(rng, n)


class LrBuffer:
    """Ordered (state, optimal action) pairs collected between LR updates."""

    def __init__(self) -> None:
        self._states: list[np.ndarray] = []
        self._actions: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._states)

    def push(self, s: np.ndarray, o: np.ndarray) -> None:
        self._states.append(np.array(s, dtype=np.float64))
        self._actions.append(np.array(o, dtype=np.float64))

    def drain(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Return every stored pair in insertion order and empty the buffer."""
        out = list(zip(self._states, self._actions))
        self._states, self._actions = [], []
        return out

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self._states), np.array(self._actions)


def drain(buffer: LrBuffer) -> list[tuple[np.ndarray, np.ndarray]]:
    return buffer.drain()
