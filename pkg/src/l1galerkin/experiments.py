"""Experiment drivers behind the command-line interface.

Single runs, convergence sweeps with observed orders, reproduction of the
reference tables, and the Gronwall verification matrix.  Everything here is
deterministic given its inputs; parallel execution only changes wall time.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from . import fracl1
from .fracl1 import L1Kernel
from .problems import PROBLEMS, get_problem
from .sparse import DEFAULT_TOL
from .stepper import SchemeId, Stepper, make_space

__all__ = [
    "DEGENERATE_FLOOR",
    "ConfigError",
    "ExperimentConfig",
    "GronwallCheck",
    "GronwallVerification",
    "RateTable",
    "ReferenceRow",
    "RunSummary",
    "TableBlock",
    "TABLES",
    "convergence_sweep",
    "format_csv",
    "gronwall_verify",
    "observed_orders",
    "reference_rows",
    "reproduce_table",
    "run_single",
]

log = logging.getLogger(__name__)

#: Errors below this are treated as roundoff; orders computed from them are flagged.
DEGENERATE_FLOOR = 1.0e-10


class ConfigError(ValueError):
    """Invalid experiment configuration (a usage error, not a numerical one)."""


# {{{ configuration and single runs


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "huxley2d"
    scheme: str = "s1"
    alpha: float = 0.5
    degree: int = 1
    m: int = 10
    n_steps: int = 10
    metric: str = "final"
    tol: float = DEFAULT_TOL
    solver: str = "direct"
    drift_mode: str = "implicit"

    def __post_init__(self) -> None:
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        try:
            SchemeId(self.scheme)
        except ValueError:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from s1, s2, s3") from None
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.degree not in (1, 2):
            raise ConfigError(f"degree must be 1 or 2, got {self.degree}")
        if self.m < 1 or self.n_steps < 1:
            raise ConfigError(f"m and n_steps must be positive, got m={self.m}, n_steps={self.n_steps}")
        if self.metric not in ("final", "max"):
            raise ConfigError(f"metric must be 'final' or 'max', got {self.metric!r}")
        if not self.tol > 0.0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.solver not in ("cg", "direct", "auto"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if self.drift_mode not in ("implicit", "explicit"):
            raise ConfigError(f"unknown drift mode {self.drift_mode!r}")


@dataclass(frozen=True)
class RunSummary:
    config: ExperimentConfig
    final_error: float
    max_error: float
    solver_iterations: int

    @property
    def error(self) -> float:
        return self.final_error if self.config.metric == "final" else self.max_error


def run_single(config: ExperimentConfig) -> RunSummary:
    """Run one discretisation to the final time and measure its error.

    Raises
    ------
    l1galerkin.stepper.SolverFailure
        If a per-step linear solve does not converge.
    FloatingPointError
        If the computed errors are not finite.
    """
    problem = get_problem(config.problem, config.alpha)
    space = make_space(problem, config.m, config.degree)
    kernel = L1Kernel.from_final_time(config.alpha, problem.T, config.n_steps)
    st = Stepper(
        space, kernel, problem, tol=config.tol, solver=config.solver, drift_mode=config.drift_mode
    )
    with np.errstate(over="ignore", invalid="ignore"):
        result = st.run(config.scheme)
    if not np.all(np.isfinite(result.errors)):
        raise FloatingPointError(f"non-finite error in run {config}")
    return RunSummary(
        config=config,
        final_error=result.final_error,
        max_error=result.max_error,
        solver_iterations=sum(r.iterations for r in result.reports),
    )


def _run_many(configs: Sequence[ExperimentConfig], jobs: int = 1) -> list[RunSummary]:
    """Results in input order, whatever the completion order."""
    if jobs <= 1 or len(configs) <= 1:
        return [run_single(c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_single, configs))


# }}}


# {{{ rate tables


def observed_orders(mesh: Sequence[float], errors: Sequence[float]) -> np.ndarray:
    """``log(e_{i-1} / e_i) / log(mesh_i / mesh_{i-1})``; the first entry is NaN."""
    mesh = np.asarray(mesh, dtype=np.float64)
    e = np.asarray(errors, dtype=np.float64)
    out = np.full(len(e), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = np.log(e[:-1] / e[1:]) / np.log(mesh[1:] / mesh[:-1])
    return out


@dataclass(frozen=True)
class RateTable:
    """Errors against a refined mesh parameter, with observed orders.

    ``mesh`` holds ``N`` for temporal sweeps and ``M`` for spatial ones.
    """

    mesh: tuple[int, ...]
    errors: tuple[float, ...]
    axis: str = "temporal"
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def orders(self) -> np.ndarray:
        return observed_orders(self.mesh, self.errors)

    @property
    def degenerate(self) -> bool:
        """True when some error sits at the roundoff floor, making orders meaningless."""
        return bool(np.min(self.errors) < DEGENERATE_FLOOR)

    def rows(self) -> list[tuple[int, float, float]]:
        return list(zip(self.mesh, self.errors, self.orders))

    def format_text(self) -> str:
        head = ", ".join(f"{k}={v}" for k, v in self.meta.items())
        label = "N" if self.axis == "temporal" else "M"
        lines = [head, f"{label:>8}  {'error':>12}  {'order':>6}"]
        for mesh, err, order in self.rows():
            o = "" if np.isnan(order) else f"{order:6.2f}"
            lines.append(f"{mesh:>8d}  {err:12.3e}  {o:>6}")
        if self.degenerate:
            lines.append(f"warning: errors below {DEGENERATE_FLOOR:.0e}; orders are not meaningful")
        return "\n".join(lines)


def _fmt(x: float | None) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.5e}"


def format_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """CSV text with floats in 6-significant-digit scientific notation."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) if isinstance(v, float) or v is None else v for v in row])
    return buf.getvalue()


def _check_refinement(values: Sequence[int]) -> None:
    if len(values) < 2:
        raise ConfigError("a sweep needs at least two mesh values")
    v = np.asarray(values, dtype=np.float64)
    if np.any(v < 1) or np.any(np.diff(v) <= 0):
        raise ConfigError(f"mesh values must increase, got {list(values)}")
    ratios = v[1:] / v[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-12):
        raise ConfigError(f"mesh values must refine by a fixed ratio, got {list(values)}")


def convergence_sweep(
    config: ExperimentConfig,
    axis: str,
    values: Sequence[int],
    *,
    time_power: int | None = 3,
    jobs: int = 1,
) -> RateTable:
    """Refine in time (``N`` takes ``values``) or in space (``m`` does).

    Spatial sweeps couple ``N = M ** time_power`` unless ``time_power`` is
    None, in which case ``config.n_steps`` is kept fixed.
    """
    _check_refinement(values)
    if axis == "temporal":
        configs = [replace(config, n_steps=int(v)) for v in values]
    elif axis == "spatial":
        configs = [
            replace(config, m=int(v), n_steps=int(v) ** time_power if time_power else config.n_steps)
            for v in values
        ]
    else:
        raise ConfigError(f"axis must be 'temporal' or 'spatial', got {axis!r}")
    summaries = _run_many(configs, jobs)
    meta = {
        "problem": config.problem,
        "scheme": config.scheme,
        "alpha": config.alpha,
        "degree": config.degree,
        "metric": config.metric,
    }
    if axis == "temporal":
        meta["m"] = config.m
    return RateTable(
        mesh=tuple(int(v) for v in values),
        errors=tuple(s.error for s in summaries),
        axis=axis,
        meta=meta,
    )


# }}}


# {{{ reference tables


@dataclass(frozen=True)
class ReferenceRow:
    table: int
    scheme: str
    alpha: float
    degree: int
    mesh: int
    error: float
    order: float | None


def reference_rows(table: int | None = None) -> list[ReferenceRow]:
    """Published values from the packaged data file."""
    text = resources.files("l1galerkin").joinpath("data/reference_tables.csv").read_text()
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    out = []
    for rec in csv.DictReader(lines):
        row = ReferenceRow(
            table=int(rec["table"]),
            scheme=rec["scheme"],
            alpha=float(rec["alpha"]),
            degree=int(rec["degree"]),
            mesh=int(rec["mesh"]),
            error=float(rec["error"]),
            order=float(rec["order"]) if rec["order"] else None,
        )
        if table is None or row.table == table:
            out.append(row)
    return out


@dataclass(frozen=True)
class TableSpec:
    problem: str
    axis: str
    metric: str
    m: int | None
    schemes: tuple[str, ...]
    alphas: tuple[float, ...]
    degrees: tuple[int, ...]
    desk: tuple[int, ...]
    full: tuple[int, ...]


TABLES: dict[int, TableSpec] = {
    1: TableSpec("huxley2d", "temporal", "final", 100, ("s1", "s2", "s3"), (0.25, 0.5, 0.75), (2,),
                 (10, 20, 40, 80), (10, 20, 40, 80)),
    2: TableSpec("huxley2d", "spatial", "final", None, ("s1",), (0.25,), (1, 2),
                 (5, 10, 20), (5, 10, 20, 40)),
    5: TableSpec("fokker-planck1d", "temporal", "max", 10_000, ("s1", "s2", "s3"), (0.4, 0.6, 0.8), (1,),
                 (50, 100, 200, 400, 800), (50, 100, 200, 400, 800)),
}


@dataclass(frozen=True)
class TableBlock:
    """One reproduced column block next to its published values."""

    table: int
    rates: RateTable
    reference: tuple[ReferenceRow, ...]

    @property
    def relative_deviation(self) -> np.ndarray:
        ref = np.array([r.error for r in self.reference])
        return (np.asarray(self.rates.errors) - ref) / ref

    def csv_rows(self):
        meta = self.rates.meta
        for (mesh, err, order), ref, dev in zip(self.rates.rows(), self.reference, self.relative_deviation):
            yield (self.table, meta["scheme"], f"{meta['alpha']:g}", meta["degree"], mesh,
                   float(err), float(order), ref.error, ref.order, float(dev))

    def format_text(self) -> str:
        m = self.rates.meta
        lines = [f"table {self.table}: scheme={m['scheme']} alpha={m['alpha']:g} degree={m['degree']}",
                 f"{'mesh':>8}  {'error':>10}  {'order':>6}  {'ref':>10}  {'ref ord':>7}  {'rel dev':>8}"]
        for (mesh, err, order), ref, dev in zip(self.rates.rows(), self.reference, self.relative_deviation):
            o = "" if np.isnan(order) else f"{order:6.2f}"
            ro = "" if ref.order is None else f"{ref.order:7.2f}"
            lines.append(f"{mesh:>8d}  {err:10.3e}  {o:>6}  {ref.error:10.2e}  {ro:>7}  {dev:+8.1%}")
        return "\n".join(lines)


TABLE_CSV_HEADER = ("table", "scheme", "alpha", "degree", "mesh", "error", "order",
                    "ref_error", "ref_order", "rel_dev")


def reproduce_table(
    table: int,
    scale: str = "desk",
    *,
    jobs: int = 1,
    schemes: Sequence[str] | None = None,
    alphas: Sequence[float] | None = None,
    tol: float = DEFAULT_TOL,
    solver: str = "direct",
) -> list[TableBlock]:
    """Rerun every block of a reference table and pair it with the published cells."""
    if table not in TABLES:
        raise ConfigError(f"table must be one of {sorted(TABLES)}, got {table}")
    if scale not in ("desk", "full"):
        raise ConfigError(f"scale must be 'desk' or 'full', got {scale!r}")
    spec = TABLES[table]
    values = spec.desk if scale == "desk" else spec.full
    if scale == "full" and spec.full != spec.desk:
        log.warning("full-scale table %d includes mesh %d; expect a long run", table, spec.full[-1])

    refs = reference_rows(table)
    blocks_cfg = []
    for scheme in schemes or spec.schemes:
        for alpha in alphas or spec.alphas:
            for degree in spec.degrees:
                base = ExperimentConfig(
                    problem=spec.problem, scheme=scheme, alpha=alpha, degree=degree,
                    m=spec.m or values[0], n_steps=values[0], metric=spec.metric,
                    tol=tol, solver=solver,
                )
                if spec.axis == "temporal":
                    cfgs = [replace(base, n_steps=v) for v in values]
                else:
                    cfgs = [replace(base, m=v, n_steps=v**3) for v in values]
                ref = tuple(
                    next(r for r in refs
                         if (r.scheme, r.alpha, r.degree, r.mesh) == (scheme, alpha, degree, v))
                    for v in values
                )
                blocks_cfg.append((base, cfgs, ref))

    flat = [c for _, cfgs, _ in blocks_cfg for c in cfgs]
    summaries = iter(_run_many(flat, jobs))
    blocks = []
    for base, cfgs, ref in blocks_cfg:
        errs = tuple(next(summaries).error for _ in cfgs)
        meta = {"problem": base.problem, "scheme": base.scheme, "alpha": base.alpha,
                "degree": base.degree, "metric": base.metric}
        rates = RateTable(mesh=tuple(values), errors=errs, axis=spec.axis, meta=meta)
        blocks.append(TableBlock(table=table, rates=rates, reference=ref))
    return blocks


# }}}


# {{{ Gronwall verification


IDENTITY_TOL = 1.0e-10
INEQUALITY_RTOL = 1.0e-12
POWER_RANGE = range(1, 7)


@dataclass(frozen=True)
class GronwallCheck:
    alpha: float
    check: str
    passed: bool
    n: int | None = None
    detail: str = ""


@dataclass
class GronwallVerification:
    checks: list[GronwallCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[GronwallCheck]:
        return [c for c in self.checks if not c.passed]

    def format_matrix(self) -> str:
        alphas = sorted({c.alpha for c in self.checks})
        names = list(dict.fromkeys(c.check for c in self.checks))
        width = max(len(n) for n in names)
        lines = [f"{'check':<{width}}  " + " ".join(f"{'a=' + format(a, 'g'):<6}" for a in alphas)]
        for name in names:
            cells = []
            for a in alphas:
                c = next((c for c in self.checks if c.alpha == a and c.check == name), None)
                cells.append(f"{'-' if c is None else ('pass' if c.passed else 'FAIL'):<6}")
            lines.append(f"{name:<{width}}  " + " ".join(cells))
        for c in self.failures:
            at = "" if c.n is None else f" n={c.n}"
            lines.append(f"failed: alpha={c.alpha:g}{at} check={c.check} {c.detail}".rstrip())
        return "\n".join(lines)


def _first_failure(bad: np.ndarray) -> int | None:
    idx = np.flatnonzero(bad)
    return int(idx[0]) + 1 if idx.size else None


def gronwall_verify(
    alphas: Sequence[float] = (0.25, 0.5, 0.75),
    n_steps: int = 512,
    lambdas: Sequence[float] = (0.0, 0.5, 2.0),
    trials: int = 200,
    *,
    corrupt_p: bool = False,
    seed: int = 0,
) -> GronwallVerification:
    """Run the p-sequence, coercivity and Gronwall checks for each order.

    ``corrupt_p`` perturbs one entry of every p sequence before the checks;
    it exists to demonstrate that failures are detected.
    """
    if n_steps < 1:
        raise ConfigError(f"n_steps must be >= 1, got {n_steps}")
    if trials < 0:
        raise ConfigError(f"trials must be >= 0, got {trials}")
    rng = np.random.default_rng(seed)
    checks: list[GronwallCheck] = []
    for alpha in alphas:
        if not 0.0 < alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
        seq = fracl1.p_sequence(alpha, n_steps)
        if corrupt_p:
            p = seq.p.copy()
            p[min(1, n_steps)] *= 1.0 + 1e-3
            seq = fracl1.PSequence(alpha=alpha, p=p)

        defects = np.abs(fracl1.p_identity_defects(seq))
        checks.append(GronwallCheck(alpha, "identity", not np.any(defects > IDENTITY_TOL),
                                    _first_failure(defects > IDENTITY_TOL),
                                    f"max defect {defects.max():.1e}"))
        p = seq.p[1:]
        bad = (p <= 0.0) | (p >= 1.0)
        checks.append(GronwallCheck(alpha, "p-range", not bad.any(), _first_failure(bad)))

        n = np.arange(1, n_steps + 1, dtype=np.float64)
        slack = fracl1.p_sum_slack(seq)
        bad = slack < -INEQUALITY_RTOL * n**alpha
        checks.append(GronwallCheck(alpha, "sum-bound", not bad.any(), _first_failure(bad)))
        for m in POWER_RANGE:
            slack = fracl1.p_power_slack(seq, m)
            bad = slack < -INEQUALITY_RTOL * n ** (m * alpha)
            checks.append(GronwallCheck(alpha, f"power-bound m={m}", not bad.any(), _first_failure(bad)))

        n_c = min(n_steps, 64)
        kernel = L1Kernel(alpha=alpha, tau=1.0 / n_c, n_max=n_c)
        failed = None
        for t in range(trials):
            e = rng.standard_normal((n_c + 1, 4)) * rng.uniform(0.1, 10.0)
            if not fracl1.coercivity_check(e, kernel).holds:
                failed = t
                break
        checks.append(GronwallCheck(alpha, "coercivity", failed is None,
                                    detail="" if failed is None else f"trial {failed}"))

        tau = 1.0 / n_steps
        g = 0.3 + 0.2 * np.sin(np.arange(1, n_steps + 1))
        scale = L1Kernel(alpha=alpha, tau=tau, n_max=n_steps).scale
        for l1 in lambdas:
            for l2 in lambdas:
                name = f"gronwall l1={l1:g} l2={l2:g}"
                if scale <= l1:
                    # step too large for the premise to be solvable; outside the hypotheses
                    checks.append(GronwallCheck(alpha, name, True, detail="skipped: tau too large"))
                    continue
                omega = fracl1.gronwall_equality_sequence(1.0, g, l1, l2, alpha, tau)
                premise = fracl1.GronwallPremise(omega=omega, g=g, lambda1=l1, lambda2=l2,
                                                 alpha=alpha, tau=tau)
                rep = fracl1.gronwall_check(premise)
                ok = rep.premise_holds and rep.bound_holds
                n_bad = rep.first_premise_failure
                if n_bad is None and not ok:
                    n_bad = next(s.n for s in rep.steps if s.bound_ok is False)
                checks.append(GronwallCheck(alpha, name, ok, None if ok else n_bad))
    return GronwallVerification(checks)


# }}}
