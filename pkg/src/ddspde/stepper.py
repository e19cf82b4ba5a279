"""Lie-composed IMEX Euler-Maruyama steps over a partition of unity.

One step of size ``h`` from ``t_{n-1}`` to ``t_n`` runs the subdomains in order
``l = 1..s``::

    (I + h alpha(t_n) A_l) U_l = U_{l-1} + h chi_l F(t_{n-1}, U_{l-1})
                                 + h chi_l G(t_n) + chi_l B(t_{n-1}, U^{n-1}) dW_l

with ``U_0 = U^{n-1}`` and ``U^n = U_s``.  The diffusion coefficient always
sees the state at the start of the step, the drift sees the running substate,
and ``dW_l`` is the same Brownian path truncated at level ``K_l``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import fft
from scipy.linalg import solve_banded

from .grid import Grid2D, ScalarField, WeightedDiffusionOperator, assemble_weighted_diffusion
from .noise import NoisePath, increment_values
from .partition import PartitionOfUnity, build_strip_partition
from .timegrid import TimeGrid

__all__ = [
    "ProblemSpec",
    "StepperConfig",
    "SolverError",
    "TimeGrid",
    "solve_spd",
    "StripSolver",
    "lie_step",
    "integrate",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Linear solve did not reach the requested tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def _zero_field(x1, x2):
    return np.zeros_like(x1)


@dataclass(frozen=True)
class ProblemSpec:
    """Coefficients of ``du = (alpha(t) Lap u + F(t, x, u) + G(t, x)) dt + B(t, x, u) dW``.

    ``F_tilde``, ``G_tilde``, ``B_tilde`` and ``u0`` are evaluated on whole
    node arrays and must broadcast; ``None`` stands for the zero function.
    """

    alpha: Callable[[float], float]
    F_tilde: Optional[Callable] = None
    G_tilde: Optional[Callable] = None
    B_tilde: Optional[Callable] = None
    u0: Callable = None
    T: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.u0 is None:
            object.__setattr__(self, "u0", _zero_field)


def solve_spd(
    op: WeightedDiffusionOperator,
    h: float,
    rhs: ScalarField | np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
):
    """Solve ``(I + h op) U = rhs`` by Jacobi-preconditioned conjugate gradients.

    The iteration starts from ``rhs``, so nodes decoupled from the operator
    (all adjacent weights zero) are returned unchanged.  Accepts and returns
    either a :class:`ScalarField` or a raw ``(n, n)`` array.
    """
    as_field = isinstance(rhs, ScalarField)
    b = rhs.values if as_field else np.asarray(rhs, dtype=float)
    if h < 0:
        raise ValueError("h must be non-negative")
    if not np.all(np.isfinite(b)):
        raise ValueError("rhs contains non-finite values")
    n = op.grid.n_interior
    if max_iter is None:
        max_iter = 10 * n * n
    x = b.copy()
    if h == 0 or op.alpha_scale == 0:
        return ScalarField(op.grid, x) if as_field else x

    bnorm = np.linalg.norm(b)
    r = b - x - h * op.matvec(x)
    if bnorm == 0 or np.linalg.norm(r) <= tol * bnorm:
        return ScalarField(op.grid, x) if as_field else x
    minv = 1.0 / (1.0 + h * op.diagonal)
    z = minv * r
    p = z.copy()
    rz = np.vdot(r, z)
    for it in range(1, max_iter + 1):
        ap = p + h * op.matvec(p)
        a = rz / np.vdot(p, ap)
        x += a * p
        r -= a * ap
        rnorm = np.linalg.norm(r)
        if rnorm <= tol * bnorm:
            break
        z = minv * r
        rz_new = np.vdot(r, z)
        p *= rz_new / rz
        p += z
        rz = rz_new
    else:
        raise SolverError(
            f"CG did not converge in {max_iter} iterations (relative residual {rnorm / bnorm:.3e})",
            residual=rnorm / bnorm,
            iterations=max_iter,
        )
    return ScalarField(op.grid, x) if as_field else x


class StripSolver:
    """Direct solver for ``I + h A`` when the weights depend on x1 only.

    A sine transform in x2 diagonalises the x2 part, leaving one tridiagonal
    system in x1 per x2-frequency; all of them are solved as a single
    block-tridiagonal banded system.
    """

    def __init__(self, op: WeightedDiffusionOperator):
        if not op.is_x1_separable():
            raise ValueError("operator weights vary in x2; use solve_spd")
        n = op.grid.n_interior
        wx = op.edge_weights_x[:, 0]
        self.grid = op.grid
        self.inv_dx2 = 1.0 / op.grid.spacing**2
        self.diag_x = wx[:-1] + wx[1:]
        self.off_x = -wx[1:-1]
        self.chi_y = op.edge_weights_y[:, 0]
        m = np.arange(1, n + 1)
        self.mu = 4.0 * np.sin(m * np.pi / (2 * (n + 1))) ** 2
        off = np.zeros((n, n))
        off[:, :-1] = self.off_x
        self._off = off.ravel()[:-1]
        self._main0 = self.diag_x[None, :] + self.mu[:, None] * self.chi_y[None, :]

    def solve(self, h_alpha: float, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(I + h_alpha A_unit) U = rhs`` for raw ``(n, n)`` arrays."""
        n = self.grid.n_interior
        if h_alpha == 0:
            return rhs.copy()
        c = h_alpha * self.inv_dx2
        ab = np.zeros((3, n * n))
        ab[1] = 1.0 + c * self._main0.ravel()
        ab[0, 1:] = c * self._off
        ab[2, :-1] = c * self._off
        bhat = fft.dst(rhs, type=1, norm="ortho", axis=1).T.ravel()
        y = solve_banded((1, 1), ab, bhat, overwrite_ab=True, overwrite_b=True, check_finite=False)
        return fft.idst(y.reshape(n, n).T, type=1, norm="ortho", axis=1)


@dataclass(eq=False)
class StepperConfig:
    """Partition, per-subdomain noise truncation and linear solver settings.

    ``solver`` is ``"cg"`` (preconditioned conjugate gradients), ``"direct"``
    (sine transform plus banded solve, strip partitions only) or ``"auto"``
    (direct whenever the operators allow it).
    """

    partition: PartitionOfUnity
    K_per_subdomain: Sequence[int]
    solver_tol: float = 1e-10
    solver_max_iter: int | None = None
    solver: str = "auto"
    operators: tuple[WeightedDiffusionOperator, ...] = field(init=False, repr=False)
    _direct: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        self.K_per_subdomain = tuple(int(k) for k in self.K_per_subdomain)
        if len(self.K_per_subdomain) != self.partition.s:
            raise ValueError(f"need {self.partition.s} truncation levels, got {len(self.K_per_subdomain)}")
        if any(k < 1 for k in self.K_per_subdomain):
            raise ValueError("truncation levels must be >= 1")
        if not self.solver_tol > 0:
            raise ValueError("solver_tol must be positive")
        if self.solver not in ("auto", "cg", "direct"):
            raise ValueError(f"unknown solver {self.solver!r}")
        g = self.partition.grid
        if self.solver_max_iter is None:
            self.solver_max_iter = 10 * g.size
        self.operators = tuple(assemble_weighted_diffusion(g, chi, 1.0) for chi in self.partition.chi)

    @classmethod
    def unsplit(cls, g: Grid2D, K: int, **kwargs) -> "StepperConfig":
        return cls(build_strip_partition(g, 1), [K], **kwargs)

    @property
    def grid(self) -> Grid2D:
        return self.partition.grid

    @property
    def s(self) -> int:
        return self.partition.s

    def solve(self, l: int, alpha: float, h: float, rhs: np.ndarray) -> np.ndarray:
        """Implicit substep solve for 0-based subdomain ``l`` on raw arrays."""
        op = self.operators[l]
        use_direct = self.solver == "direct" or (self.solver == "auto" and op.is_x1_separable())
        if use_direct:
            solver = self._direct.get(l)
            if solver is None:
                solver = self._direct[l] = StripSolver(op)
            return solver.solve(h * alpha, rhs)
        return solve_spd(op.scaled(alpha), h, rhs, self.solver_tol, self.solver_max_iter)


def _step_values(cfg: StepperConfig, prob: ProblemSpec, u_prev: np.ndarray, t_prev: float, h: float,
                 path: NoisePath, n: int, mesh) -> np.ndarray:
    x1, x2 = mesh
    t_n = t_prev + h
    alpha = float(prob.alpha(t_n))
    if alpha < 0:
        raise ValueError(f"alpha({t_n}) = {alpha} is negative")
    b_prev = None if prob.B_tilde is None else prob.B_tilde(t_prev, x1, x2, u_prev)
    g_n = None if prob.G_tilde is None else prob.G_tilde(t_n, x1, x2)
    noise_cache: dict[int, np.ndarray] = {}
    u = u_prev
    for l in range(cfg.s):
        chi = cfg.partition.chi[l].values
        forcing = np.zeros_like(u)
        if prob.F_tilde is not None:
            forcing += prob.F_tilde(t_prev, x1, x2, u)
        if g_n is not None:
            forcing += g_n
        rhs = u + h * chi * forcing
        if b_prev is not None:
            K = cfg.K_per_subdomain[l]
            dw = noise_cache.get(K)
            if dw is None:
                dw = noise_cache[K] = increment_values(path, n, K)
            rhs = rhs + chi * b_prev * dw
        try:
            u = cfg.solve(l, alpha, h, rhs)
        except SolverError as exc:
            raise SolverError(f"subdomain {l + 1}, step {n}: {exc}", exc.residual, exc.iterations) from exc
    return u


def _check_path(path: NoisePath, t_prev: float, h: float, n: int) -> None:
    nodes = path.time_grid.nodes
    if not 1 <= n <= path.n_steps:
        raise IndexError(f"step {n} outside the noise path's 1..{path.n_steps}")
    if abs(nodes[n - 1] - t_prev) > 1e-12 * max(1.0, abs(t_prev)) or abs(nodes[n] - nodes[n - 1] - h) > 1e-12:
        raise ValueError(f"step {n} = [{t_prev}, {t_prev + h}] does not match the noise path's time grid")


def lie_step(cfg: StepperConfig, prob: ProblemSpec, U_prev: ScalarField, t_prev: float, h: float,
             path: NoisePath, n: int) -> ScalarField:
    """One split step; returns ``U^n`` from ``U^{n-1}``."""
    if not h > 0:
        raise ValueError("h must be positive")
    _check_path(path, t_prev, h, n)
    u = _step_values(cfg, prob, U_prev.values, t_prev, h, path, n, cfg.grid.mesh())
    return ScalarField(cfg.grid, u)


def integrate(cfg: StepperConfig, prob: ProblemSpec, time_grid: TimeGrid, path: NoisePath,
              record_moments: bool = False, callback: Callable[[int, float, np.ndarray], None] | None = None):
    """Run the split scheme over ``time_grid``.

    Returns ``(U_final, moments)``; ``moments`` holds ``||U^n||_H^2`` for
    ``n = 0..N`` when requested and is ``None`` otherwise.  ``callback`` is
    called as ``callback(n, t_n, values)`` after every step, including
    ``n = 0``.
    """
    if path.n_steps != time_grid.n_steps or not np.allclose(path.time_grid.nodes, time_grid.nodes, rtol=0, atol=1e-12):
        raise ValueError("noise path and time grid disagree")
    g = cfg.grid
    mesh = g.mesh()
    u = np.asarray(prob.u0(*mesh), dtype=float) * np.ones(g.shape)
    if not np.all(np.isfinite(u)):
        raise ValueError("initial datum is not finite")
    dx2 = g.spacing**2
    moments = [dx2 * float(np.sum(u * u))] if record_moments else None
    if callback is not None:
        callback(0, 0.0, u)
    t = time_grid.nodes
    for n in range(1, time_grid.n_steps + 1):
        u = _step_values(cfg, prob, u, float(t[n - 1]), float(t[n] - t[n - 1]), path, n, mesh)
        if not np.all(np.isfinite(u)):
            raise FloatingPointError(f"non-finite state after step {n}")
        if record_moments:
            moments.append(dx2 * float(np.sum(u * u)))
        if callback is not None:
            callback(n, float(t[n]), u)
    return ScalarField(g, u), (None if moments is None else np.array(moments))
