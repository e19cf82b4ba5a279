"""Q-Wiener noise in the Dirichlet sine basis of the unit square.

The covariance has eigenpairs ``q_k = (k1**2 + k2**2) ** (-1/2 - delta)`` and
``psi_k(x) = 2 sin(k1 pi x1) sin(k2 pi x2)``.  A truncation level ``K`` keeps
the modes with ``max(k1, k2) <= K``.  Brownian increments are stored as a
``(N, K, K)`` coefficient array so that every truncation level and every
coarser time grid reads from the same underlying path.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import open_out as _open_out
from .grid import Grid2D, ScalarField
from .timegrid import TimeGrid

__all__ = [
    "KLSpectrum",
    "NoisePath",
    "build_spectrum",
    "eigenvalues",
    "sample_path",
    "increment_field",
    "increment_values",
    "aggregate_to_coarse",
    "truncation_tail",
    "path_generator",
    "write_spectrum_csv",
]


def eigenvalues(K: int, delta: float) -> np.ndarray:
    """``(K, K)`` array with ``q[k1 - 1, k2 - 1]``."""
    k = np.arange(1, K + 1, dtype=float)
    return (k[:, None] ** 2 + k[None, :] ** 2) ** (-0.5 - delta)


@dataclass(frozen=True, eq=False)
class KLSpectrum:
    K: int
    delta: float
    grid: Grid2D
    q: np.ndarray  # (K, K)
    sines: np.ndarray  # (n, K), sines[i, k - 1] = sin(k pi x_i)

    @property
    def sqrt_q(self) -> np.ndarray:
        return np.sqrt(self.q)

    def eigenfunction(self, k1: int, k2: int) -> ScalarField:
        if not (1 <= k1 <= self.K and 1 <= k2 <= self.K):
            raise IndexError(f"mode ({k1}, {k2}) outside spectrum with K={self.K}")
        s = self.sines
        return ScalarField(self.grid, 2.0 * np.outer(s[:, k1 - 1], s[:, k2 - 1]))

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Raw field ``sum_k coeffs[k] * psi_k`` for a ``(K', K')`` block, ``K' <= K``."""
        m = coeffs.shape[0]
        s = self.sines[:, :m]
        return 2.0 * (s @ coeffs @ s.T)


def build_spectrum(K: int, delta: float, g: Grid2D) -> KLSpectrum:
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    q = eigenvalues(K, delta)
    sines = np.sin(np.pi * np.outer(g.coords, np.arange(1, K + 1)))
    q.setflags(write=False)
    sines.setflags(write=False)
    return KLSpectrum(int(K), float(delta), g, q, sines)


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Brownian coefficient increments ``dbeta[n - 1, k1 - 1, k2 - 1]`` for steps ``n = 1..N``."""

    spectrum: KLSpectrum
    time_grid: TimeGrid
    increments: np.ndarray
    seed: int
    sample: int = 0

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]


def path_generator(seed: int, sample: int = 0) -> np.random.Generator:
    """Counter-based stream keyed by ``(seed, sample)``.

    Philox draws depend only on the key and the position in the stream, so a
    Monte Carlo sample reproduces regardless of which worker computes it.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(sample),))
    return np.random.Generator(np.random.Philox(ss))


def sample_path(spectrum: KLSpectrum, time_grid: TimeGrid, seed: int, sample: int = 0) -> NoisePath:
    """Draw ``N x K x K`` independent increments, step ``n`` with variance ``h_n``."""
    K = spectrum.K
    rng = path_generator(seed, sample)
    z = rng.standard_normal((time_grid.n_steps, K, K))
    z *= np.sqrt(time_grid.steps)[:, None, None]
    z.setflags(write=False)
    return NoisePath(spectrum, time_grid, z, int(seed), int(sample))


def increment_values(path: NoisePath, n: int, K_trunc: int | None = None) -> np.ndarray:
    """Raw ``(n, n)`` array of the truncated Q-Wiener increment over step ``n`` (1-based)."""
    spec = path.spectrum
    K_trunc = spec.K if K_trunc is None else int(K_trunc)
    if not 1 <= K_trunc <= spec.K:
        raise ValueError(f"K_trunc={K_trunc} outside stored spectrum 1..{spec.K}")
    if not 1 <= n <= path.n_steps:
        raise IndexError(f"step {n} outside 1..{path.n_steps}")
    c = path.increments[n - 1, :K_trunc, :K_trunc] * spec.sqrt_q[:K_trunc, :K_trunc]
    return spec.synthesize(c)


def increment_field(path: NoisePath, n: int, K_trunc: int | None = None) -> ScalarField:
    return ScalarField(path.spectrum.grid, increment_values(path, n, K_trunc))


def aggregate_to_coarse(path_fine: NoisePath, r: int) -> NoisePath:
    """Sum blocks of ``r`` consecutive fine increments into one coarse increment."""
    r = int(r)
    if r < 1:
        raise ValueError("refinement must be >= 1")
    if r == 1:
        return path_fine
    N = path_fine.n_steps
    if N % r:
        raise ValueError(f"{N} fine steps not divisible by refinement {r}")
    if not path_fine.time_grid.is_uniform():
        raise ValueError("aggregation requires a uniform fine grid")
    K = path_fine.spectrum.K
    coarse = path_fine.increments.reshape(N // r, r, K, K).sum(axis=1)
    coarse.setflags(write=False)
    tg = path_fine.time_grid.coarsen(r)
    return NoisePath(path_fine.spectrum, tg, coarse, path_fine.seed, path_fine.sample)


def truncation_tail(K: int, delta: float, cap: int) -> tuple[float, int]:
    """Partial tail ``sum_{K < |k| <= cap} q_k`` with ``|k| = max(k1, k2)``.

    Returned with ``cap`` because the full series is only bounded below by
    this sum.
    """
    if cap <= K:
        raise ValueError(f"cap={cap} must exceed K={K}")
    if not delta > 0:
        raise ValueError("delta must be > 0")
    q = eigenvalues(cap, delta)
    return float(q[K:, :].sum() + q[:K, K:].sum()), int(cap)


def write_spectrum_csv(path: str | Path, spectrum: KLSpectrum) -> None:
    with _open_out(path) as fh:
        fh.write("k1,k2,q\n")
        for k1 in range(1, spectrum.K + 1):
            for k2 in range(1, spectrum.K + 1):
                fh.write(f"{k1},{k2},{spectrum.q[k1 - 1, k2 - 1]:.17g}\n")
