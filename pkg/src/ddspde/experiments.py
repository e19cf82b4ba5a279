"""Monte Carlo strong-error and moment studies, and the two benchmark problems.

Every sample draws one Brownian path on the finest time grid.  The reference
solution is the unsplit scheme on that grid; coarser runs reuse the same path
with increments summed over blocks of fine steps, so the estimated error
reflects the time discretisation rather than sampling noise.
"""

from __future__ import annotations

import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .noise import KLSpectrum, aggregate_to_coarse, sample_path
from .stepper import ProblemSpec, StepperConfig, TimeGrid, integrate

__all__ = [
    "ErrorTable",
    "FitResult",
    "MomentTable",
    "experiment1_spec",
    "experiment2_spec",
    "heat_spec",
    "PROBLEMS",
    "strong_error_study",
    "strong_error_studies",
    "fit_order",
    "moment_study",
    "worker_count",
]

log = logging.getLogger(__name__)


# -- benchmark problems ------------------------------------------------------
# Module-level functions (not lambdas) so problem specs pickle into workers.

def _bump(x1, x2):
    return 5.0 * x1**2 * (x1 - 1) ** 3 * x2**2 * (x2 - 1) ** 3


def _alpha_exp1(t):
    return 0.1 * (1.0 + math.exp(-t))


def _sin_u(t, x1, x2, u):
    return np.sin(u)


def _one(t, x1, x2, u):
    return np.ones_like(u)


def _alpha_exp2(t):
    return 0.1


def _forcing_exp2(t, x1, x2, u):
    return (3.0 * np.sin(5.0 * x1) + 2.0 * np.cos(7.0 * x2)) * (math.cos(t) + math.sin(4.0 * t))


def _identity_u(t, x1, x2, u):
    return u


def _alpha_one(t):
    return 1.0


def _psi11(x1, x2):
    return 2.0 * np.sin(np.pi * x1) * np.sin(np.pi * x2)


def experiment1_spec() -> ProblemSpec:
    """Semilinear equation with additive noise: ``F = sin(u)``, ``B = 1``."""
    return ProblemSpec(alpha=_alpha_exp1, F_tilde=_sin_u, G_tilde=None, B_tilde=_one, u0=_bump, T=1.0, name="exp1")


def experiment2_spec() -> ProblemSpec:
    """Linear equation with space-time forcing and multiplicative noise ``B = u``."""
    return ProblemSpec(alpha=_alpha_exp2, F_tilde=_forcing_exp2, G_tilde=None, B_tilde=_identity_u, u0=_bump,
                       T=1.0, name="exp2")


def heat_spec(T: float = 1.0) -> ProblemSpec:
    """Deterministic heat equation started from the first sine mode."""
    return ProblemSpec(alpha=_alpha_one, u0=_psi11, T=T, name="heat")


PROBLEMS = {"exp1": experiment1_spec, "exp2": experiment2_spec, "heat": heat_spec}


# -- result tables -----------------------------------------------------------

@dataclass
class FitResult:
    slope: float
    intercept: float
    residual: float


@dataclass
class ErrorTable:
    h: np.ndarray
    rms_error: np.ndarray
    stderr: np.ndarray
    samples: np.ndarray
    metadata: dict = field(default_factory=dict)
    fit: FitResult | None = None

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.rms_error = np.asarray(self.rms_error, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        self.samples = np.asarray(self.samples, dtype=int)
        if np.any(np.diff(self.h) >= 0):
            raise ValueError("rows must be sorted by decreasing h")
        if not (np.all(np.isfinite(self.rms_error)) and np.all(self.rms_error >= 0)):
            raise ValueError("errors must be finite and non-negative")

    def __len__(self) -> int:
        return self.h.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, value in self.metadata.items():
            buf.write(f"# {key}={value}\n")
        buf.write("h,rms_error,stderr,samples\n")
        for row in zip(self.h, self.rms_error, self.stderr, self.samples):
            buf.write(f"{row[0]:.17g},{row[1]:.17g},{row[2]:.17g},{row[3]}\n")
        if self.fit is not None:
            f = self.fit
            buf.write(f"# slope={f.slope:.17g} intercept={f.intercept:.17g} residual={f.residual:.17g}\n")
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "ErrorTable":
        meta: dict = {}
        fit = None
        rows = []
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("slope="):
                    parts = dict(p.split("=", 1) for p in body.split())
                    fit = FitResult(float(parts["slope"]), float(parts["intercept"]), float(parts["residual"]))
                else:
                    key, _, value = body.partition("=")
                    meta[key] = value
            elif line.startswith("h,"):
                continue
            else:
                h, e, se, m = line.split(",")
                rows.append((float(h), float(e), float(se), int(m)))
        h, e, se, m = zip(*rows)
        return cls(np.array(h), np.array(e), np.array(se), np.array(m), meta, fit)


@dataclass
class MomentTable:
    h: np.ndarray
    max_moment: np.ndarray
    stderr: np.ndarray
    argmax_step: np.ndarray
    samples: int

    def to_csv(self) -> str:
        lines = ["h,max_moment,stderr,argmax_step,samples"]
        for h, mm, se, n in zip(self.h, self.max_moment, self.stderr, self.argmax_step):
            lines.append(f"{h:.17g},{mm:.17g},{se:.17g},{n},{self.samples}")
        return "\n".join(lines) + "\n"


# -- study machinery ---------------------------------------------------------

def worker_count(workers: int | None = None) -> int:
    """Resolve a worker count; ``None`` reads ``DDSPDE_THREADS`` (0 = all CPUs)."""
    if workers is None:
        workers = int(os.environ.get("DDSPDE_THREADS", "0") or 0)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def _refinements(T: float, h_list: Sequence[float], h_fine: float) -> tuple[int, list[int]]:
    N_fine = round(T / h_fine)
    if N_fine < 1 or abs(N_fine * h_fine - T) > 1e-12 * T:
        raise ValueError(f"h={h_fine} does not divide T={T}")
    ratios = []
    for h in h_list:
        r = round(h / h_fine)
        if r < 1 or abs(r * h_fine - h) > 1e-12 * h:
            raise ValueError(f"h={h} is not an integer multiple of {h_fine}")
        ratios.append(r)
    return N_fine, ratios


def _check_h_list(h_list: Sequence[float]) -> list[float]:
    h_list = [float(h) for h in h_list]
    if not h_list or any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ValueError("h_list must be non-empty and strictly decreasing")
    return h_list


def _run_map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def _error_sample(task) -> np.ndarray:
    prob, cfgs, ref_cfg, spectrum, T, h_ref, ratios, seed, m = task
    N_fine = round(T / h_ref)
    tg_fine = TimeGrid.uniform(T, N_fine)
    path = sample_path(spectrum, tg_fine, seed, sample=m)
    u_ref, _ = integrate(ref_cfg, prob, tg_fine, path)
    out = np.empty((len(cfgs), len(ratios)))
    for j, r in enumerate(ratios):
        coarse = aggregate_to_coarse(path, r)
        for c, cfg in enumerate(cfgs):
            try:
                u, _ = integrate(cfg, prob, coarse.time_grid, coarse)
            except Exception as exc:
                raise RuntimeError(f"sample {m}, h={T / coarse.n_steps:g}, config {c}: {exc}") from exc
            out[c, j] = (u - u_ref).norm_sq()
    return out


def _summarise(sq: np.ndarray) -> tuple[float, float]:
    """Root of the mean squared error and its delta-method standard error."""
    M = sq.size
    mean = float(np.mean(sq))
    rms = math.sqrt(mean)
    se_mean = float(np.std(sq, ddof=1)) / math.sqrt(M) if M > 1 else float("nan")
    se = se_mean / (2.0 * rms) if rms > 0 else 0.0
    return rms, se


def strong_error_studies(
    prob: ProblemSpec,
    cfgs: Sequence[StepperConfig],
    spectrum: KLSpectrum,
    h_list: Sequence[float],
    h_ref: float,
    M: int,
    seed: int,
    reference_cfg: StepperConfig | None = None,
    workers: int | None = None,
) -> list[ErrorTable]:
    """Strong errors at ``T`` for several configurations sharing paths and references.

    The reference defaults to the unsplit scheme with ``K = spectrum.K`` at
    step ``h_ref``.  Returns one :class:`ErrorTable` per configuration.
    """
    h_list = _check_h_list(h_list)
    if M < 2:
        raise ValueError("need at least two samples")
    if h_ref > h_list[-1]:
        raise ValueError("h_ref must not exceed the smallest h")
    _, ratios = _refinements(prob.T, h_list, h_ref)
    for cfg in cfgs:
        if cfg.grid != spectrum.grid:
            raise ValueError("configuration and spectrum live on different grids")
        if max(cfg.K_per_subdomain) > spectrum.K:
            raise ValueError("a truncation level exceeds the spectrum")
    if reference_cfg is None:
        reference_cfg = StepperConfig.unsplit(spectrum.grid, spectrum.K, solver_tol=cfgs[0].solver_tol)
    tasks = [(prob, list(cfgs), reference_cfg, spectrum, prob.T, h_ref, ratios, int(seed), m) for m in range(M)]
    results = _run_map(_error_sample, tasks, worker_count(workers))
    sq = np.stack(results)  # (M, n_cfg, n_h), summed in sample order
    tables = []
    for c, cfg in enumerate(cfgs):
        stats = [_summarise(sq[:, c, j]) for j in range(len(h_list))]
        meta = {
            "problem": prob.name,
            "grid": cfg.grid.n_interior,
            "K": spectrum.K,
            "K_sub": ";".join(str(k) for k in cfg.K_per_subdomain),
            "delta": f"{spectrum.delta:.17g}",
            "s": cfg.s,
            "overlap": f"{cfg.partition.overlap:.17g}",
            "seed": int(seed),
            "h_ref": f"{h_ref:.17g}",
        }
        tables.append(ErrorTable(np.array(h_list), np.array([s[0] for s in stats]),
                                 np.array([s[1] for s in stats]), np.full(len(h_list), M), meta))
    return tables


def strong_error_study(prob, cfg, spectrum, h_list, h_ref, M, seed, **kwargs) -> ErrorTable:
    return strong_error_studies(prob, [cfg], spectrum, h_list, h_ref, M, seed, **kwargs)[0]


def fit_order(table: ErrorTable, min_error: float = 1e-8) -> FitResult:
    """Least-squares slope of ``log(rms_error)`` against ``log(h)``.

    Rows below ``min_error`` (solver-noise level, default ``100 * 1e-10``)
    are dropped; exactly zero or negative errors are rejected outright.
    """
    e = table.rms_error
    if np.any(~np.isfinite(e)) or np.any(e <= 0):
        raise ValueError("errors must be strictly positive to fit an order; drop self-comparison rows")
    keep = e >= min_error
    if keep.sum() < 3:
        raise ValueError(f"need >= 3 rows above {min_error:g} to fit, have {int(keep.sum())}")
    x = np.log(table.h[keep])
    y = np.log(e[keep])
    (slope, intercept), res, *_ = np.polyfit(x, y, 1, full=True)
    residual = math.sqrt(float(res[0])) if len(res) else 0.0
    return FitResult(float(slope), float(intercept), residual)


def _moment_sample(task) -> list[np.ndarray]:
    prob, cfg, spectrum, T, h_fine, ratios, seed, m = task
    tg_fine = TimeGrid.uniform(T, round(T / h_fine))
    path = sample_path(spectrum, tg_fine, seed, sample=m)
    out = []
    for r in ratios:
        coarse = aggregate_to_coarse(path, r)
        _, moments = integrate(cfg, prob, coarse.time_grid, coarse, record_moments=True)
        out.append(moments)
    return out


def moment_study(prob: ProblemSpec, cfg: StepperConfig, spectrum: KLSpectrum, h_list: Sequence[float], M: int,
                 seed: int, workers: int | None = None) -> MomentTable:
    """Monte Carlo estimate of ``max_n E||U^n||_H^2`` for each step size."""
    h_list = _check_h_list(h_list)
    if M < 2:
        raise ValueError("need at least two samples")
    _, ratios = _refinements(prob.T, h_list, h_list[-1])
    tasks = [(prob, cfg, spectrum, prob.T, h_list[-1], ratios, int(seed), m) for m in range(M)]
    results = _run_map(_moment_sample, tasks, worker_count(workers))
    maxima, errs, where = [], [], []
    for j in range(len(h_list)):
        mom = np.stack([res[j] for res in results])  # (M, N+1)
        mean = mom.mean(axis=0)
        n = int(np.argmax(mean))
        maxima.append(float(mean[n]))
        errs.append(float(mom[:, n].std(ddof=1) / math.sqrt(M)))
        where.append(n)
    return MomentTable(np.array(h_list), np.array(maxima), np.array(errs), np.array(where), M)
