"""Command-line harness: ``l1galerkin {run,sweep,gronwall,table,list-problems}``.

Exit status is 0 on success, 2 for usage errors and 3 for numerical failures
(a linear solve that does not converge, non-finite errors, or a failed
verification check).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .experiments import (
    TABLE_CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    convergence_sweep,
    format_csv,
    gronwall_verify,
    reproduce_table,
    run_single,
)
from .problems import PROBLEMS, get_problem
from .stepper import SolverFailure

__all__ = ["EXIT_NUMERICAL", "EXIT_OK", "EXIT_USAGE", "load_config_file", "main"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("l1galerkin")

# config-file keys and their types; the file uses flag names with '_' or '-'
CONFIG_TYPES = {
    "problem": str,
    "scheme": str,
    "alpha": float,
    "degree": int,
    "m": int,
    "n_steps": int,
    "metric": str,
    "tol": float,
    "solver": str,
    "drift_mode": str,
    "out": str,
    "scale": str,
    "jobs": int,
    "axis": str,
    "values": str,
    "time_power": int,
}


class UsageError(Exception):
    pass


def load_config_file(path: str | Path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_TYPES:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = CONFIG_TYPES[key](value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# {{{ parser


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    # defaults are None so a config file can fill them in
    p.add_argument("--problem", choices=sorted(PROBLEMS))
    p.add_argument("--scheme", choices=["s1", "s2", "s3"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--degree", type=int, choices=[1, 2])
    p.add_argument("--m", type=int, help="subdivisions per axis")
    p.add_argument("--n-steps", type=int, help="time steps N")
    p.add_argument("--metric", choices=["final", "max"])
    p.add_argument("--tol", type=float, help="linear solver tolerance")
    p.add_argument("--solver", choices=["cg", "direct", "auto"])
    p.add_argument("--drift-mode", choices=["implicit", "explicit"])


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; command-line flags override it")
    p.add_argument("--out", help="write CSV here")
    p.add_argument("--jobs", type=int, help="parallel worker processes")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="l1galerkin",
        description="Linearised L1-Galerkin FEM for time-fractional reaction-diffusion problems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a single discretisation")
    _add_experiment_flags(p)
    _add_common(p)

    p = sub.add_parser("sweep", help="temporal or spatial convergence sweep")
    _add_experiment_flags(p)
    _add_common(p)
    p.add_argument("--axis", choices=["temporal", "spatial"])
    p.add_argument("--values", help="comma-separated N (temporal) or M (spatial) values")
    p.add_argument("--time-power", type=int,
                   help="spatial sweeps use N = M**time_power (default 3; 0 keeps --n-steps)")

    p = sub.add_parser("table", help="reproduce a reference table and diff against it")
    p.add_argument("table_id", type=int, choices=[1, 2, 5])
    p.add_argument("--scale", choices=["desk", "full"])
    p.add_argument("--scheme", type=lambda s: s.split(","), help="restrict to schemes, e.g. s1,s2")
    p.add_argument("--alpha", type=_float_list, help="restrict to orders, e.g. 0.25,0.5")
    p.add_argument("--tol", type=float)
    p.add_argument("--solver", choices=["cg", "direct", "auto"])
    _add_common(p)

    p = sub.add_parser("gronwall", help="verify the discrete fractional Gronwall machinery")
    p.add_argument("--alpha", type=_float_list, default=[0.25, 0.5, 0.75], help="comma-separated orders")
    p.add_argument("--n-steps", type=int, default=512)
    p.add_argument("--lambdas", type=_float_list, default=[0.0, 0.5, 2.0])
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt-p", action="store_true",
                   help="perturb the p sequence to check that failures are reported")
    p.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("list-problems", help="list registered problems")
    return parser


# }}}


def _settings(args: argparse.Namespace) -> dict:
    """Config-file values overlaid by explicitly given flags."""
    merged = load_config_file(args.config) if getattr(args, "config", None) else {}
    for key, value in vars(args).items():
        if value is not None and key in CONFIG_TYPES:
            merged[key] = value
    return merged


def _experiment_config(settings: dict) -> ExperimentConfig:
    names = {f.name for f in fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in settings.items() if k in names})


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text)


# {{{ commands


def cmd_run(args) -> int:
    s = _settings(args)
    cfg = _experiment_config(s)
    summary = run_single(cfg)
    print(f"problem={cfg.problem} scheme={cfg.scheme} alpha={cfg.alpha:g} degree={cfg.degree} "
          f"m={cfg.m} N={cfg.n_steps}")
    print(f"final error {summary.final_error:.6e}")
    print(f"max error   {summary.max_error:.6e}")
    header = ("problem", "scheme", "alpha", "degree", "m", "n_steps", "final_error", "max_error")
    row = (cfg.problem, cfg.scheme, f"{cfg.alpha:g}", cfg.degree, cfg.m, cfg.n_steps,
           summary.final_error, summary.max_error)
    _write(s.get("out"), format_csv(header, [row]))
    return EXIT_OK


def cmd_sweep(args) -> int:
    s = _settings(args)
    if "values" not in s:
        raise UsageError("sweep needs --values")
    try:
        values = _int_list(s["values"]) if isinstance(s["values"], str) else s["values"]
    except argparse.ArgumentTypeError as exc:
        raise UsageError(str(exc)) from None
    axis = s.get("axis", "temporal")
    power = s.get("time_power", 3)
    cfg = _experiment_config(s)
    table = convergence_sweep(cfg, axis, values, time_power=power or None, jobs=s.get("jobs", 1))
    print(table.format_text())
    rows = [(mesh, float(err), float(order)) for mesh, err, order in table.rows()]
    _write(s.get("out"), format_csv(("mesh", "error", "order"), rows))
    return EXIT_OK


def cmd_table(args) -> int:
    s = _settings(args)
    blocks = reproduce_table(
        args.table_id,
        s.get("scale", "desk"),
        jobs=s.get("jobs", 1),
        schemes=args.scheme,
        alphas=args.alpha,
        tol=s.get("tol", 1e-12),
        solver=s.get("solver", "direct"),
    )
    for b in blocks:
        print(b.format_text())
        print()
    rows = [r for b in blocks for r in b.csv_rows()]
    _write(s.get("out"), format_csv(TABLE_CSV_HEADER, rows))
    return EXIT_OK


def cmd_gronwall(args) -> int:
    report = gronwall_verify(
        args.alpha, args.n_steps, args.lambdas, args.trials, corrupt_p=args.corrupt_p, seed=args.seed
    )
    print(report.format_matrix())
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def cmd_list_problems(args) -> int:
    for name in sorted(PROBLEMS):
        p = get_problem(name, 0.5)
        print(f"{name:<16} {p.description}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "table": cmd_table,
    "gronwall": cmd_gronwall,
    "list-problems": cmd_list_problems,
}


# }}}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
