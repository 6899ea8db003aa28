import csv
import io
import math

import numpy as np
import pytest

from l1galerkin import cli
from l1galerkin.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, load_config_file, main
from l1galerkin.experiments import (
    DEGENERATE_FLOOR,
    TABLES,
    ConfigError,
    ExperimentConfig,
    RateTable,
    convergence_sweep,
    format_csv,
    gronwall_verify,
    observed_orders,
    reference_rows,
    run_single,
)
from l1galerkin.sparse import SolveReport
from l1galerkin.stepper import SolverFailure

RUN = ["run", "--problem", "fisher1d", "--scheme", "s2", "--alpha", "0.5", "--degree", "1",
       "--m", "8", "--n-steps", "6"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# {{{ orders and tables


def test_observed_orders_formula():
    mesh = [10, 20, 40]
    err = [1e-2, 2.6e-3, 6.1e-4]
    o = observed_orders(mesh, err)
    assert math.isnan(o[0])
    assert o[1] == pytest.approx(math.log(1e-2 / 2.6e-3) / math.log(2.0), abs=1e-12)
    assert o[2] == pytest.approx(math.log(2.6e-3 / 6.1e-4) / math.log(2.0), abs=1e-12)


def test_observed_orders_non_dyadic():
    o = observed_orders([5, 15], [1.0, 1.0 / 9.0])
    assert o[1] == pytest.approx(2.0, abs=1e-12)


def test_rate_table_degenerate_flag():
    ok = RateTable(mesh=(2, 4), errors=(1e-3, 2.5e-4))
    bad = RateTable(mesh=(2, 4), errors=(1e-3, 0.1 * DEGENERATE_FLOOR))
    assert not ok.degenerate
    assert bad.degenerate
    assert "not meaningful" in bad.format_text()


def test_format_csv_significant_digits():
    text = format_csv(("a", "b", "c"), [(1, 1.0 / 3.0, float("nan")), ("x", None, 2.5e-7)])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows == [["a", "b", "c"], ["1", "3.33333e-01", ""], ["x", "", "2.50000e-07"]]


def test_reference_rows_counts():
    assert len(reference_rows(1)) == 36
    assert len(reference_rows(2)) == 8
    assert len(reference_rows(5)) == 45
    assert len(reference_rows()) == 89


@pytest.mark.parametrize("table_id", sorted(TABLES))
def test_reference_rows_cover_tables(table_id):
    spec = TABLES[table_id]
    keys = {(r.scheme, r.alpha, r.degree, r.mesh) for r in reference_rows(table_id)}
    for s in spec.schemes:
        for a in spec.alphas:
            for d in spec.degrees:
                for v in spec.full:
                    assert (s, a, d, v) in keys


@pytest.mark.parametrize("table_id", sorted(TABLES))
def test_reference_orders_consistent(table_id):
    # printed orders agree with the printed errors to print precision
    rows = reference_rows(table_id)
    groups = {}
    for r in rows:
        groups.setdefault((r.scheme, r.alpha, r.degree), []).append(r)
    for group in groups.values():
        group.sort(key=lambda r: r.mesh)
        o = observed_orders([r.mesh for r in group], [r.error for r in group])
        for r, oo in zip(group[1:], o[1:]):
            if r.order is not None:
                assert abs(r.order - oo) < 0.1 or (table_id, r.scheme, r.alpha) == (1, "s2", 0.5)


def test_sweep_rejects_irregular_refinement():
    cfg = ExperimentConfig(problem="fisher1d", m=4, n_steps=2)
    with pytest.raises(ConfigError):
        convergence_sweep(cfg, "temporal", [2, 4, 10])
    with pytest.raises(ConfigError):
        convergence_sweep(cfg, "temporal", [4])
    with pytest.raises(ConfigError):
        convergence_sweep(cfg, "sideways", [2, 4])


def test_spatial_sweep_couples_time_steps():
    cfg = ExperimentConfig(problem="fisher1d", scheme="s1", alpha=0.5, degree=1, m=4, n_steps=2)
    table = convergence_sweep(cfg, "spatial", [2, 4], time_power=2)
    direct = [run_single(ExperimentConfig(problem="fisher1d", scheme="s1", alpha=0.5, degree=1,
                                          m=v, n_steps=v**2)).error for v in (2, 4)]
    assert list(table.errors) == direct


def test_parallel_sweep_matches_serial():
    cfg = ExperimentConfig(problem="fisher1d", scheme="s3", alpha=0.25, degree=2, m=6, n_steps=2)
    serial = convergence_sweep(cfg, "temporal", [2, 4, 8])
    parallel = convergence_sweep(cfg, "temporal", [2, 4, 8], jobs=2)
    assert serial.errors == parallel.errors


@pytest.mark.parametrize("kwargs", [
    {"problem": "nope"}, {"scheme": "s4"}, {"alpha": 1.0}, {"alpha": 0.0}, {"degree": 3},
    {"m": 0}, {"n_steps": 0}, {"metric": "l2"}, {"tol": 0.0}, {"solver": "gmres"},
    {"drift_mode": "sideways"},
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kwargs)


# }}}


# {{{ gronwall verification


def test_gronwall_verify_passes():
    rep = gronwall_verify((0.3, 0.7), n_steps=64, trials=10)
    assert rep.passed
    assert not rep.failures
    assert "FAIL" not in rep.format_matrix()


def test_gronwall_verify_corruption_reported():
    rep = gronwall_verify((0.5,), n_steps=32, trials=2, corrupt_p=True)
    assert not rep.passed
    ident = [c for c in rep.failures if c.check == "identity"]
    assert ident and ident[0].alpha == 0.5 and ident[0].n == 2
    assert "failed: alpha=0.5 n=2 check=identity" in rep.format_matrix()


def test_gronwall_verify_single_step():
    assert gronwall_verify((0.5,), n_steps=1, trials=3).passed


def test_gronwall_verify_validation():
    with pytest.raises(ConfigError):
        gronwall_verify((0.5,), n_steps=0)
    with pytest.raises(ConfigError):
        gronwall_verify((1.5,), n_steps=4)


# }}}


# {{{ command line


def test_list_problems(capsys):
    assert main(["list-problems"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("huxley2d", "fisher1d", "fisher2d", "fokker-planck1d"):
        assert name in out


def test_help_exit_ok(capsys):
    assert main(["--help"]) == EXIT_OK


def test_run_writes_csv(tmp_path, capsys):
    out = tmp_path / "run.csv"
    assert main(RUN + ["--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    assert rows[0] == ["problem", "scheme", "alpha", "degree", "m", "n_steps", "final_error", "max_error"]
    assert rows[1][:6] == ["fisher1d", "s2", "0.5", "1", "8", "6"]
    expected = run_single(ExperimentConfig(problem="fisher1d", scheme="s2", alpha=0.5, degree=1,
                                           m=8, n_steps=6))
    assert rows[1][6] == f"{expected.final_error:.5e}"
    assert rows[1][7] == f"{expected.max_error:.5e}"


def test_run_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(RUN + ["--out", str(a)]) == EXIT_OK
    assert main(RUN + ["--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_sweep_csv(tmp_path):
    out = tmp_path / "sweep.csv"
    argv = ["sweep", "--problem", "fisher1d", "--scheme", "s1", "--alpha", "0.5", "--degree", "2",
            "--m", "16", "--n-steps", "2", "--axis", "temporal", "--values", "4,8,16", "--out", str(out)]
    assert main(argv) == EXIT_OK
    rows = read_csv(out)
    assert rows[0] == ["mesh", "error", "order"]
    assert [r[0] for r in rows[1:]] == ["4", "8", "16"]
    assert rows[1][2] == ""
    errs = [float(r[1]) for r in rows[1:]]
    # printed orders agree with the printed errors up to 6-digit rounding
    for i in (1, 2):
        assert float(rows[i + 1][2]) == pytest.approx(math.log(errs[i - 1] / errs[i]) / math.log(2.0),
                                                     abs=1e-4)


def test_config_file_and_override(tmp_path):
    conf = tmp_path / "exp.conf"
    conf.write_text("# fisher run\nproblem = fisher1d\nscheme=s3\nalpha = 0.25\ndegree = 1\n"
                    "m = 8\nn-steps = 6  # trailing comment\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", "--config", str(conf), "--out", str(a)]) == EXIT_OK
    assert read_csv(a)[1][:6] == ["fisher1d", "s3", "0.25", "1", "8", "6"]
    assert main(["run", "--config", str(conf), "--scheme", "s1", "--m", "4", "--out", str(b)]) == EXIT_OK
    assert read_csv(b)[1][:6] == ["fisher1d", "s1", "0.25", "1", "4", "6"]


def test_load_config_file_errors(tmp_path):
    bad = tmp_path / "bad.conf"
    bad.write_text("alpha 0.5\n")
    with pytest.raises(cli.UsageError):
        load_config_file(bad)
    bad.write_text("colour = red\n")
    with pytest.raises(cli.UsageError):
        load_config_file(bad)
    bad.write_text("alpha = half\n")
    with pytest.raises(cli.UsageError):
        load_config_file(bad)


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["run", "--alpha", "1.5"],
    ["run", "--problem", "nope"],
    ["run", "--degree", "3"],
    ["run", "--config", "/nonexistent/file.conf"],
    ["sweep", "--problem", "fisher1d"],
    ["sweep", "--problem", "fisher1d", "--values", "4,x"],
    ["sweep", "--problem", "fisher1d", "--values", "4,8,20"],
    ["table", "3"],
    ["gronwall", "--alpha", "1.2"],
    ["gronwall", "--n-steps", "0"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_gronwall_command(capsys):
    assert main(["gronwall", "--n-steps", "32", "--trials", "4"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "identity" in out and "coercivity" in out and "FAIL" not in out


def test_gronwall_corrupted_exits_numerical(capsys):
    code = main(["gronwall", "--alpha", "0.5", "--n-steps", "16", "--trials", "2", "--corrupt-p"])
    assert code == EXIT_NUMERICAL
    assert "failed: alpha=0.5 n=2 check=identity" in capsys.readouterr().out


def test_gronwall_single_step(capsys):
    assert main(["gronwall", "--n-steps", "1", "--trials", "2"]) == EXIT_OK


def test_solver_failure_exits_numerical(monkeypatch, capsys):
    def boom(config):
        raise SolverFailure(3, SolveReport(iterations=50, residual=1e-3, converged=False))

    monkeypatch.setattr(cli, "run_single", boom)
    assert main(RUN) == EXIT_NUMERICAL
    assert "step 3" in capsys.readouterr().err


def test_nonfinite_exits_numerical(monkeypatch, capsys):
    def boom(config):
        raise FloatingPointError("non-finite error")

    monkeypatch.setattr(cli, "run_single", boom)
    assert main(RUN) == EXIT_NUMERICAL


def test_table_subset(tmp_path, capsys):
    out = tmp_path / "t5.csv"
    assert main(["table", "5", "--scheme", "s1", "--alpha", "0.8", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    assert rows[0][:7] == ["table", "scheme", "alpha", "degree", "mesh", "error", "order"]
    assert [r[4] for r in rows[1:]] == ["50", "100", "200", "400", "800"]
    assert all(r[:4] == ["5", "s1", "0.8", "1"] for r in rows[1:])


# }}}
