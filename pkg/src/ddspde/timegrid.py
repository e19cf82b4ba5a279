"""Time grids ``0 = t_0 < t_1 < ... < t_N = T``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["TimeGrid"]


@dataclass(frozen=True, eq=False)
class TimeGrid:
    nodes: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.nodes, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a time grid needs at least two nodes")
        if t[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if np.any(np.diff(t) < 0):
            raise ValueError("time grid nodes must be non-decreasing")
        t.setflags(write=False)
        object.__setattr__(self, "nodes", t)

    @classmethod
    def uniform(cls, T: float, N: int) -> "TimeGrid":
        if T <= 0:
            raise ValueError("T must be positive")
        if N < 1:
            raise ValueError("need at least one step")
        t = np.arange(N + 1) * (T / N)
        t[-1] = T
        return cls(t)

    @classmethod
    def with_step(cls, T: float, h: float) -> "TimeGrid":
        """Uniform grid with step ``h``; ``T / h`` must be an integer."""
        N = round(T / h)
        if N < 1 or abs(N * h - T) > 1e-12 * T:
            raise ValueError(f"step {h} does not divide T={T}")
        return cls.uniform(T, N)

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_steps(self) -> int:
        return self.nodes.size - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def h_max(self) -> float:
        return float(self.steps.max())

    def is_uniform(self) -> bool:
        # node rounding is absolute in t, so compare against T
        h = self.steps
        return bool(np.all(np.abs(h - h[0]) <= 1e-12 * h[0] + 64 * np.finfo(float).eps * self.T))

    def coarsen(self, r: int) -> "TimeGrid":
        if self.n_steps % r:
            raise ValueError(f"{self.n_steps} steps not divisible by {r}")
        return TimeGrid(self.nodes[::r].copy())
