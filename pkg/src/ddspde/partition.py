"""Overlapping strip partitions of unity in the x1 direction."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import open_out as _open_out
from .grid import Grid2D, ScalarField

__all__ = ["PartitionOfUnity", "strip_weights", "build_strip_partition", "split_weight_apply", "write_partition_csv"]


def strip_weights(x1: np.ndarray, s: int, overlap: float) -> np.ndarray:
    """Trapezoidal weights ``chi[l, ...]`` evaluated at ``x1``.

    Each internal interface ``j / s`` carries a linear ramp of total width
    ``overlap`` centred on it; strip ``l`` is the difference of its two
    neighbouring ramps, so the weights telescope to one.
    """
    x1 = np.asarray(x1, dtype=float)
    # r[j] is 0 left of interface j / s and 1 right of it; r[0] = 1, r[s] = 0
    r = [np.ones_like(x1)]
    r += [np.clip((x1 - j / s) / overlap + 0.5, 0.0, 1.0) for j in range(1, s)]
    r += [np.zeros_like(x1)]
    return np.stack([r[l - 1] - r[l] for l in range(1, s + 1)])


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    grid: Grid2D
    s: int
    overlap: float
    chi: tuple[ScalarField, ...]
    support: tuple[tuple[int, int], ...]  # inclusive 0-based x1 index range with chi > 0

    def __len__(self) -> int:
        return self.s


def build_strip_partition(g: Grid2D, s: int, overlap: float = 0.1) -> PartitionOfUnity:
    if int(s) != s or s < 1:
        raise ValueError(f"s must be a positive integer, got {s!r}")
    s = int(s)
    if s >= 2 and not 0 < overlap < 1.0 / s:
        raise ValueError(f"overlap must satisfy 0 < overlap < 1/s = {1.0 / s:g}, got {overlap}")
    w = strip_weights(g.coords, s, overlap)
    chi = []
    support = []
    for row in w:
        chi.append(ScalarField(g, np.repeat(row[:, None], g.n_interior, axis=1)))
        nz = np.flatnonzero(row > 0)
        support.append((int(nz[0]), int(nz[-1])) if nz.size else (0, -1))
    return PartitionOfUnity(g, s, float(overlap), tuple(chi), tuple(support))


def split_weight_apply(p: PartitionOfUnity, l: int, v: ScalarField) -> ScalarField:
    """Pointwise product ``chi_l * v`` for a 1-based subdomain index ``l``."""
    if not 1 <= l <= p.s:
        raise IndexError(f"subdomain index {l} outside 1..{p.s}")
    if v.grid != p.grid:
        raise ValueError("field lives on a different grid")
    return ScalarField(p.grid, p.chi[l - 1].values * v.values)


def write_partition_csv(path: str | Path, p: PartitionOfUnity) -> None:
    header = ",".join(["x1"] + [f"chi_{l}" for l in range(1, p.s + 1)])
    with _open_out(path) as fh:
        fh.write(header + "\n")
        for i, x in enumerate(p.grid.coords):
            vals = ",".join(f"{c.values[i, 0]:.17g}" for c in p.chi)
            fh.write(f"{x:.17g},{vals}\n")
