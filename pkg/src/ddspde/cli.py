"""Command-line entry point: ``ddspde {run,moments,partition dump,spectrum dump}``.

Configuration files are flat ``key = value`` text with ``#`` comments.
Command-line flags override file values.
"""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import experiments as ex
from .grid import ScalarField, build_grid, write_field_csv
from .noise import aggregate_to_coarse, build_spectrum, sample_path, write_spectrum_csv
from .partition import build_strip_partition, write_partition_csv
from .stepper import StepperConfig, integrate
from .timegrid import TimeGrid

log = logging.getLogger("ddspde")

EXPERIMENTS = ("exp1", "exp2", "custom")
SOLVERS = ("auto", "cg", "direct")
REQUIRED_CUSTOM = ("problem", "grid", "kmax", "delta", "strips", "overlap", "h_list", "h_ref", "samples", "seed")


class ConfigError(ValueError):
    pass


def _parse_real(text: str) -> float:
    text = text.strip()
    if "^" in text:
        base, _, exp = text.partition("^")
        return float(base) ** float(exp)
    return float(text)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(";", ",").split(",") if x.strip())


def _parse_real_list(text: str) -> tuple[float, ...]:
    return tuple(_parse_real(x) for x in text.replace(";", ",").split(",") if x.strip())


@dataclass
class RunConfig:
    experiment: str = "exp1"
    problem: str = "exp1"
    grid: int = 127
    kmax: int = 128
    k_sub: tuple[int, ...] = ()
    delta: float = 0.001
    strips: int = 4
    overlap: float = 0.1
    h_list: tuple[float, ...] = tuple(2.0**-k for k in range(4, 9))
    h_ref: float = 2.0**-10
    samples: int = 50
    seed: int = 0
    out: str = "results"
    solver: str = "auto"
    solver_tol: float = 1e-10
    compare_unsplit: bool = False
    moments: bool = False
    dump_partition: bool = False
    dump_fields: int = 0

    def validate(self) -> "RunConfig":
        def bad(key, constraint):
            raise ConfigError(f"{key}: {constraint} (got {getattr(self, key)!r})")

        if self.experiment not in EXPERIMENTS:
            bad("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
        if self.problem not in ex.PROBLEMS:
            bad("problem", f"must be one of {', '.join(ex.PROBLEMS)}")
        if self.grid < 1:
            bad("grid", "must be >= 1")
        if self.kmax < 1:
            bad("kmax", "must be >= 1")
        if not self.delta > 0:
            bad("delta", "must be > 0")
        if self.strips < 1:
            bad("strips", "must be >= 1")
        if self.strips >= 2 and not 0 < self.overlap < 1.0 / self.strips:
            bad("overlap", f"must satisfy 0 < overlap < 1/strips = {1.0 / self.strips:g}")
        if self.k_sub:
            if len(self.k_sub) != self.strips:
                bad("k_sub", f"must list one truncation level per strip ({self.strips})")
            if any(k < 1 or k > self.kmax for k in self.k_sub):
                bad("k_sub", f"entries must lie in 1..kmax={self.kmax}")
        if len(self.h_list) < 1 or any(h <= 0 for h in self.h_list):
            bad("h_list", "must be a non-empty list of positive step sizes")
        if any(b >= a for a, b in zip(self.h_list, self.h_list[1:])):
            bad("h_list", "must be strictly decreasing")
        if not 0 < self.h_ref <= min(self.h_list):
            bad("h_ref", "must satisfy 0 < h_ref <= min(h_list)")
        T = ex.PROBLEMS[self.problem]().T
        for h in self.h_list + (self.h_ref,):
            r = round(h / self.h_ref)
            if r < 1 or abs(r * self.h_ref - h) > 1e-12 * h:
                bad("h_list", f"every step must be an integer multiple of h_ref={self.h_ref:g}")
            N = round(T / h)
            if abs(N * h - T) > 1e-12 * T:
                bad("h_list", f"every step must divide T={T:g}")
        if self.samples < 2:
            bad("samples", "must be >= 2")
        if self.seed < 0 or self.seed >= 2**64:
            bad("seed", "must be a 64-bit unsigned integer")
        if self.solver not in SOLVERS:
            bad("solver", f"must be one of {', '.join(SOLVERS)}")
        if not self.solver_tol > 0:
            bad("solver_tol", "must be > 0")
        if self.dump_fields < 0:
            bad("dump_fields", "must be >= 0")
        return self

    @property
    def truncation_levels(self) -> tuple[int, ...]:
        return self.k_sub or (self.kmax,) * self.strips


# field annotations are strings under postponed evaluation
_PARSERS = {
    "int": lambda s: int(s.strip(), 0),
    "float": _parse_real,
    "str": str.strip,
    "bool": _parse_bool,
    "tuple[int, ...]": _parse_int_list,
    "tuple[float, ...]": _parse_real_list,
}
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    if key not in _TYPES:
        raise ConfigError(f"unknown key {key!r}; valid keys: {', '.join(_TYPES)}")
    try:
        return _PARSERS[_TYPES[key]](raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None


def read_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        values[key] = _coerce(key, raw)
    return values


def parse_config(text: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a validated :class:`RunConfig` from file text plus flag overrides.

    ``exp1``/``exp2`` start from the benchmark defaults; ``custom`` requires
    every key in ``REQUIRED_CUSTOM``.
    """
    values = read_config_text(text) if text else {}
    for key, value in (overrides or {}).items():
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r}")
        if value is not None:
            values[key] = value
    experiment = values.get("experiment", "custom" if "problem" in values else "exp1")
    values["experiment"] = experiment
    if experiment == "custom":
        missing = [k for k in REQUIRED_CUSTOM if k not in values]
        if missing:
            raise ConfigError(f"custom experiment is missing required keys: {', '.join(missing)}")
    elif experiment in EXPERIMENTS:
        values.setdefault("problem", experiment)
    return RunConfig(**values).validate()


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return str(value)


def serialize(cfg: RunConfig) -> str:
    return "".join(f"{f.name} = {_format(getattr(cfg, f.name))}\n" for f in fields(RunConfig))


# -- orchestration -----------------------------------------------------------

def _build(cfg: RunConfig):
    g = build_grid(cfg.grid)
    spectrum = build_spectrum(cfg.kmax, cfg.delta, g)
    part = build_strip_partition(g, cfg.strips, cfg.overlap)
    stepper = StepperConfig(part, cfg.truncation_levels, solver_tol=cfg.solver_tol, solver=cfg.solver)
    return g, spectrum, part, stepper


def _dump_fields(cfg: RunConfig, prob, spectrum, stepper, out: Path) -> None:
    """Write every ``dump_fields``-th state of sample 0 at the smallest step."""
    fdir = out / "fields"
    fdir.mkdir(exist_ok=True)
    r = round(min(cfg.h_list) / cfg.h_ref)
    fine = sample_path(spectrum, TimeGrid.uniform(prob.T, round(prob.T / cfg.h_ref)), cfg.seed, sample=0)
    path = aggregate_to_coarse(fine, r)

    def snapshot(n, t, values):
        if n % cfg.dump_fields == 0 or n == path.n_steps:
            write_field_csv(fdir / f"step_{n:06d}.csv", ScalarField(stepper.grid, values))

    integrate(stepper, prob, path.time_grid, path, callback=snapshot)


def run(cfg: RunConfig) -> int:
    """Execute the configured study, writing CSV outputs under ``cfg.out``."""
    out = Path(cfg.out)
    created = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        prob = ex.PROBLEMS[cfg.problem]()
        g, spectrum, part, stepper = _build(cfg)
        if cfg.dump_partition:
            write_partition_csv(out / "partition.csv", part)
            written.append(out / "partition.csv")
        cfgs = [stepper]
        if cfg.compare_unsplit:
            cfgs.append(StepperConfig.unsplit(g, cfg.kmax, solver_tol=cfg.solver_tol, solver=cfg.solver))
        tables = ex.strong_error_studies(prob, cfgs, spectrum, cfg.h_list, cfg.h_ref, cfg.samples, cfg.seed)
        names = ["error_table.csv", "error_table_unsplit.csv"]
        for name, table in zip(names, tables):
            try:
                table.fit = ex.fit_order(table, min_error=100 * cfg.solver_tol)
            except ValueError as exc:
                log.warning("no order fit for %s: %s", name, exc)
            table.write_csv(out / name)
            written.append(out / name)
            label = "split" if name == names[0] else "unsplit"
            s = table.fit
            summary = f"slope={s.slope:.4f} (fit residual {s.residual:.3g})" if s else "slope unavailable"
            print(f"{cfg.problem} {label} s={table.metadata['s']}: {summary}")
            for h, e, se in zip(table.h, table.rms_error, table.stderr):
                print(f"  h={h:<12.6g} rms_error={e:.6e} +- {se:.2e}")
        if cfg.moments:
            mt = ex.moment_study(prob, stepper, spectrum, cfg.h_list, cfg.samples, cfg.seed)
            (out / "moments.csv").write_text(mt.to_csv())
            written.append(out / "moments.csv")
            print(f"max_n E||U^n||^2 per h: {', '.join(f'{m:.4g}' for m in mt.max_moment)}")
        if cfg.dump_fields:
            written.append(out / "fields")
            _dump_fields(cfg, prob, spectrum, stepper, out)
    except Exception as exc:
        for p in written:
            if p.is_dir():
                shutil.rmtree(p, ignore_errors=True)
            else:
                p.unlink(missing_ok=True)
        if created:
            shutil.rmtree(out, ignore_errors=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def run_moments(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    try:
        prob = ex.PROBLEMS[cfg.problem]()
        _, spectrum, _, stepper = _build(cfg)
        mt = ex.moment_study(prob, stepper, spectrum, cfg.h_list, cfg.samples, cfg.seed)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out.mkdir(parents=True, exist_ok=True)
    (out / "moments.csv").write_text(mt.to_csv())
    sys.stdout.write(mt.to_csv())
    return 0


# -- argument parsing --------------------------------------------------------

_FLAG_KEYS = {
    "experiment": str, "problem": str, "grid": int, "kmax": int, "k_sub": _parse_int_list, "delta": _parse_real,
    "strips": int, "overlap": _parse_real, "h_list": _parse_real_list, "h_ref": _parse_real, "samples": int,
    "seed": lambda s: int(s, 0), "out": str, "solver": str, "solver_tol": _parse_real, "dump_fields": int,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value configuration file")
    for key, conv in _FLAG_KEYS.items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=conv, default=None)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ddspde", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="strong-error convergence study")
    _add_common(p_run)
    p_run.add_argument("--compare-unsplit", dest="compare_unsplit", action="store_const", const=True, default=None)
    p_run.add_argument("--moment-study", dest="moments", action="store_const", const=True, default=None)
    p_run.add_argument("--dump-partition", dest="dump_partition", action="store_const", const=True, default=None)
    p_mom = sub.add_parser("moments", help="a priori moment study")
    _add_common(p_mom)
    for name in ("partition", "spectrum"):
        p = sub.add_parser(name, help=f"{name} inspection")
        action = p.add_subparsers(dest="action", required=True)
        _add_common(action.add_parser("dump", help=f"write the {name} as CSV to stdout"))
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k in _TYPES}
    try:
        text = Path(args.config).read_text() if args.config else None
        cfg = parse_config(text, overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "run":
        return run(cfg)
    if args.command == "moments":
        return run_moments(cfg)
    g, spectrum, part, _ = _build(cfg)
    if args.command == "partition":
        write_partition_csv(sys.stdout, part)
    else:
        write_spectrum_csv(sys.stdout, spectrum)
    return 0


if __name__ == "__main__":
    sys.exit(main())
