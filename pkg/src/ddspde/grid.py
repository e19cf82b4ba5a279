"""Uniform grid on the unit square, grid functions and weighted diffusion stencils.

Only interior nodes are stored; the homogeneous Dirichlet boundary is implicit
in the stencil.  Field values are held as ``(n, n)`` arrays indexed
``[i1, i2]`` (axis 0 runs along x1), so the flattened order is row-major by
``(i1, i2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import sparse

from ._io import open_out as _open_out

__all__ = [
    "Grid2D",
    "ScalarField",
    "WeightedDiffusionOperator",
    "build_grid",
    "sample_function",
    "assemble_weighted_diffusion",
    "apply",
    "write_field_csv",
]


@dataclass(frozen=True)
class Grid2D:
    n_interior: int

    def __post_init__(self):
        if int(self.n_interior) != self.n_interior or self.n_interior < 1:
            raise ValueError(f"n_interior must be a positive integer, got {self.n_interior!r}")

    @property
    def spacing(self) -> float:
        return 1.0 / (self.n_interior + 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_interior, self.n_interior)

    @property
    def size(self) -> int:
        return self.n_interior**2

    @property
    def coords(self) -> np.ndarray:
        """Interior node coordinates along one axis, ``x_i = i * spacing``."""
        return np.arange(1, self.n_interior + 1) * self.spacing

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.coords
        return np.meshgrid(x, x, indexing="ij")

    def zeros(self) -> "ScalarField":
        return ScalarField(self, np.zeros(self.shape))


def build_grid(n_interior: int) -> Grid2D:
    return Grid2D(int(n_interior))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real value per interior node.

    Arithmetic returns new fields; inputs are never mutated.
    """

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {values.size}")
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def _check(self, other: "ScalarField") -> None:
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other: "ScalarField") -> "ScalarField":
        self._check(other)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        self._check(other)
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, other) -> "ScalarField":
        if isinstance(other, ScalarField):
            self._check(other)
            return ScalarField(self.grid, self.values * other.values)
        return ScalarField(self.grid, self.values * float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "ScalarField":
        return ScalarField(self.grid, -self.values)

    def inner(self, other: "ScalarField") -> float:
        """Discrete L2 inner product ``spacing**2 * sum(v * w)``."""
        self._check(other)
        return self.grid.spacing**2 * float(np.sum(self.values * other.values))

    def norm_sq(self) -> float:
        return self.inner(self)

    def flat(self) -> np.ndarray:
        return self.values.ravel()


def sample_function(g: Grid2D, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> ScalarField:
    """Evaluate a vectorised ``f(x1, x2)`` at the interior nodes."""
    x1, x2 = g.mesh()
    values = np.broadcast_to(np.asarray(f(x1, x2), dtype=float), g.shape)
    if not np.all(np.isfinite(values)):
        raise ValueError("sampled function returned non-finite values")
    return ScalarField(g, values.copy())


@dataclass(frozen=True, eq=False)
class WeightedDiffusionOperator:
    """Discrete form of ``v -> -div(alpha * chi * grad v)`` with Dirichlet data.

    ``edge_weights_x[i, j]`` is the weight on the interface between x1-nodes
    ``i - 1`` and ``i`` (0-based, ``i = 0`` and ``i = n`` are boundary
    interfaces) at x2-node ``j``; ``edge_weights_y`` is the transpose analogue.
    """

    grid: Grid2D
    edge_weights_x: np.ndarray  # (n + 1, n)
    edge_weights_y: np.ndarray  # (n, n + 1)
    alpha_scale: float = 1.0
    _active: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.grid.n_interior
        wx = np.asarray(self.edge_weights_x, dtype=float)
        wy = np.asarray(self.edge_weights_y, dtype=float)
        if wx.shape != (n + 1, n) or wy.shape != (n, n + 1):
            raise ValueError("edge weight arrays do not match the grid")
        if self.alpha_scale < 0:
            raise ValueError("alpha_scale must be non-negative")
        wx.setflags(write=False)
        wy.setflags(write=False)
        object.__setattr__(self, "edge_weights_x", wx)
        object.__setattr__(self, "edge_weights_y", wy)
        active = (wx[:-1] > 0) | (wx[1:] > 0) | (wy[:, :-1] > 0) | (wy[:, 1:] > 0)
        active.setflags(write=False)
        object.__setattr__(self, "_active", active)

    @property
    def active_mask(self) -> np.ndarray:
        """Nodes with at least one non-zero adjacent interface weight."""
        return self._active

    @property
    def diagonal(self) -> np.ndarray:
        wx, wy = self.edge_weights_x, self.edge_weights_y
        return self.alpha_scale / self.grid.spacing**2 * (wx[:-1] + wx[1:] + wy[:, :-1] + wy[:, 1:])

    def scaled(self, alpha: float) -> "WeightedDiffusionOperator":
        """Same interface weights with a different ``alpha_scale``."""
        if alpha == self.alpha_scale:
            return self
        return replace(self, alpha_scale=float(alpha))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Stencil action on a raw ``(n, n)`` array."""
        wx, wy = self.edge_weights_x, self.edge_weights_y
        out = (wx[:-1] + wx[1:] + wy[:, :-1] + wy[:, 1:]) * v
        out[1:, :] -= wx[1:-1] * v[:-1, :]
        out[:-1, :] -= wx[1:-1] * v[1:, :]
        out[:, 1:] -= wy[:, 1:-1] * v[:, :-1]
        out[:, :-1] -= wy[:, 1:-1] * v[:, 1:]
        out *= self.alpha_scale / self.grid.spacing**2
        return out

    def to_sparse(self) -> sparse.csr_matrix:
        """Assembled matrix in the row-major ``(i1, i2)`` ordering."""
        n = self.grid.n_interior
        idx = np.arange(n * n).reshape(n, n)
        wx, wy = self.edge_weights_x, self.edge_weights_y
        rows = [idx.ravel()]
        cols = [idx.ravel()]
        vals = [(wx[:-1] + wx[1:] + wy[:, :-1] + wy[:, 1:]).ravel()]
        for a, b, w in (
            (idx[1:, :], idx[:-1, :], wx[1:-1]),
            (idx[:, 1:], idx[:, :-1], wy[:, 1:-1]),
        ):
            rows += [a.ravel(), b.ravel()]
            cols += [b.ravel(), a.ravel()]
            vals += [-w.ravel(), -w.ravel()]
        m = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n * n, n * n)
        )
        return (self.alpha_scale / self.grid.spacing**2 * m).tocsr()

    def is_x1_separable(self) -> bool:
        """True when the weights depend on x1 only (strip partitions)."""
        wx, wy = self.edge_weights_x, self.edge_weights_y
        return bool(np.all(wx == wx[:, :1]) and np.all(wy == wy[:, :1]))


def assemble_weighted_diffusion(g: Grid2D, chi_nodes: ScalarField, alpha_value: float = 1.0) -> WeightedDiffusionOperator:
    """Assemble the diffusion operator weighted by nodal ``chi``.

    Interface weights are the arithmetic mean of ``chi`` at the two adjacent
    nodes; a boundary interface takes the value of its interior node.  The
    averaging is linear in ``chi``, so operators built from a partition of
    unity sum to the unweighted operator.
    """
    if alpha_value < 0:
        raise ValueError(f"alpha_value must be non-negative, got {alpha_value}")
    if chi_nodes.grid != g:
        raise ValueError("chi_nodes lives on a different grid")
    chi = chi_nodes.values
    if chi.min() < -1e-12 or chi.max() > 1 + 1e-12:
        raise ValueError("chi values must lie in [0, 1]")
    chi = np.clip(chi, 0.0, 1.0)
    n = g.n_interior
    wx = np.empty((n + 1, n))
    wx[0] = chi[0]
    wx[-1] = chi[-1]
    wx[1:-1] = 0.5 * (chi[:-1] + chi[1:])
    wy = np.empty((n, n + 1))
    wy[:, 0] = chi[:, 0]
    wy[:, -1] = chi[:, -1]
    wy[:, 1:-1] = 0.5 * (chi[:, :-1] + chi[:, 1:])
    return WeightedDiffusionOperator(g, wx, wy, float(alpha_value))


def apply(op: WeightedDiffusionOperator, v: ScalarField) -> ScalarField:
    if v.grid != op.grid:
        raise ValueError("field and operator live on different grids")
    return ScalarField(op.grid, op.matvec(v.values))


def write_field_csv(path: str | Path, v: ScalarField) -> None:
    """Write ``x1,x2,value`` rows, row-major over interior nodes."""
    x1, x2 = v.grid.mesh()
    with _open_out(path) as fh:
        fh.write("x1,x2,value\n")
        for a, b, c in zip(x1.ravel(), x2.ravel(), v.values.ravel()):
            fh.write(f"{a:.17g},{b:.17g},{c:.17g}\n")
