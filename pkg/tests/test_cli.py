import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from sqrtista.cli import f1_score, main
from sqrtista.problems import make_figure1, save_problem


def run(*args):
    return main([str(a) for a in args])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSolve:
    def test_figure1(self, tmp_path, capsys):
        assert run("solve", "--figure1", "--method", "sqrt-ista", "--out", tmp_path) == 0
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["status"] == "converged_zero_residual" or rep["final_cost"] <= 1 + 1e-6
        rows = read_csv(tmp_path / "trace.csv")
        assert list(rows[0]) == ["k", "cost", "sigma", "step_norm", "kkt_dist"]
        out = capsys.readouterr().out
        assert "status=" in out and "sigma=" in out and "kkt_dist=" in out

    def test_ista_from_file(self, tmp_path):
        save_problem(make_figure1(), tmp_path / "p.json")
        assert run("solve", "--problem", tmp_path / "p.json", "--method", "ista", "--tilde-mu", 2,
                   "--tau", 0.2, "--out", tmp_path / "o") == 0
        rep = json.loads((tmp_path / "o" / "report.json").read_text())
        assert rep["method"] == "ista"
        np.testing.assert_allclose(rep["final"]["f"], [0.75, 0.0], atol=1e-8)

    def test_missing_method(self, tmp_path, capsys):
        assert run("solve", "--figure1", "--out", tmp_path / "o") == 1
        assert "usage" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_two_sources(self, tmp_path):
        assert run("solve", "--figure1", "--generate", "gaussian", "--method", "sqrt-ista",
                   "--out", tmp_path / "o") == 1
        assert not (tmp_path / "o").exists()

    def test_ista_needs_tilde_mu(self, tmp_path):
        assert run("solve", "--figure1", "--method", "ista", "--out", tmp_path / "o") == 1
        assert not (tmp_path / "o").exists()

    def test_missing_problem_file(self, tmp_path):
        assert run("solve", "--problem", tmp_path / "nope.json", "--method", "sqrt-ista",
                   "--out", tmp_path / "o") == 1

    def test_bad_tau(self, tmp_path):
        assert run("solve", "--figure1", "--method", "sqrt-ista", "--tau", 1.0, "--out", tmp_path / "o") == 1
        assert not (tmp_path / "o").exists()

    def test_max_iter_exit_code(self, tmp_path):
        assert run("solve", "--generate", "gaussian", "--m", 20, "--d", 40, "--method", "sqrt-ista",
                   "--max-iter", 3, "--out", tmp_path) == 2
        assert (tmp_path / "trace.csv").exists()

    def test_group_method(self, tmp_path):
        assert run("solve", "--generate", "deconv", "--d", 32, "--kernel-width", 3, "--mu", 0.3,
                   "--method", "group-sqrt-ista", "--group-size", 2, "--out", tmp_path) == 0
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["method"] == "group-sqrt-ista"

    def test_env_outdir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SQRTISTA_OUTDIR", str(tmp_path / "env"))
        assert run("solve", "--figure1", "--method", "sqrt-ista") == 0
        assert (tmp_path / "env" / "report.json").exists()


class TestCompare:
    def test_gaussian_passes(self, tmp_path):
        assert run("compare", "--generate", "gaussian", "--m", 30, "--d", 60, "--mu", 0.2,
                   "--max-iter", 200000, "--out", tmp_path) == 0
        eq = json.loads((tmp_path / "equivalence.json").read_text())
        assert eq["outcome"] == "passed"
        assert (tmp_path / "sqrt_report.json").exists() and (tmp_path / "ista_report.json").exists()

    def test_figure1_inapplicable(self, tmp_path, capsys):
        assert run("compare", "--figure1", "--out", tmp_path) == 0
        assert "notice" in capsys.readouterr().out
        assert json.loads((tmp_path / "equivalence.json").read_text())["outcome"] == "inapplicable"
        assert run("compare", "--figure1", "--strict", "--out", tmp_path) == 2

    def test_tight_tolerance(self, tmp_path, capsys):
        code = run("compare", "--generate", "gaussian", "--m", 30, "--d", 60, "--mu", 0.2,
                   "--tol", 1e-14, "--out", tmp_path)
        assert code == 2
        assert "gap=" in capsys.readouterr().out


class TestSweep:
    ARGS = ("sweep", "--generate", "gaussian", "--m", 40, "--d", 100, "--support", 5,
            "--noises", "0,0.01,0.05", "--mus", "0.1,0.2,0.3,0.4,0.5",
            "--tilde-mus", "0.01,0.02,0.05,0.1,0.2")

    def test_rows_and_determinism(self, tmp_path):
        assert run(*self.ARGS, "--out", tmp_path / "a") == 0
        assert run(*self.ARGS, "--out", tmp_path / "b") == 0
        a = (tmp_path / "a" / "sweep.csv").read_bytes()
        assert a == (tmp_path / "b" / "sweep.csv").read_bytes()
        rows = read_csv(tmp_path / "a" / "sweep.csv")
        assert len(rows) == 30
        assert list(rows[0]) == ["noise_sigma", "method", "param", "f1", "cost", "status"]
        keys = [(float(r["noise_sigma"]), r["method"], float(r["param"])) for r in rows]
        assert keys == sorted(keys)
        clean = [float(r["f1"]) for r in rows if float(r["noise_sigma"]) == 0.0]
        assert max(clean) == 1.0

    def test_needs_generator(self, tmp_path):
        assert run("sweep", "--figure1", "--noises", "0", "--mus", "0.1", "--tilde-mus", "0.1",
                   "--out", tmp_path / "o") == 1
        assert not (tmp_path / "o").exists()

    def test_bad_grid(self, tmp_path):
        assert run("sweep", "--generate", "gaussian", "--noises", "a,b", "--mus", "0.1",
                   "--tilde-mus", "0.1", "--out", tmp_path / "o") == 1


def test_f1_score():
    truth = np.array([0.0, 1.0, 0.0, -1.0])
    assert f1_score(np.array([0.0, 0.5, 0.0, -2.0]), truth) == 1.0
    assert f1_score(np.array([0.0, 0.5, 1e-9, 0.0]), truth) == pytest.approx(2 / 3)
    assert f1_score(np.zeros(4), np.zeros(4)) == 1.0
    assert f1_score(np.zeros(4), truth) == 0.0


class TestOracle:
    def test_sqrt(self, tmp_path, capsys):
        assert run("oracle", "--figure1", "--objective", "sqrt", "--bounds", -0.5, 2, "--res", 0.005,
                   "--out", tmp_path) == 0
        d = json.loads((tmp_path / "oracle.json").read_text())
        assert d["min_value"] == pytest.approx(1.0, abs=0.01)
        np.testing.assert_allclose(d["minimiser"], [1.0, 0.0], atol=0.01)
        assert "min" in capsys.readouterr().out
        header = (tmp_path / "grid.csv").read_text().splitlines()[0]
        assert header == "x,y,value"

    def test_lasso(self, tmp_path):
        assert run("oracle", "--figure1", "--objective", "lasso", "--tilde-mu", 2, "--out", tmp_path) == 0
        d = json.loads((tmp_path / "oracle.json").read_text())
        assert d["min_value"] == pytest.approx(1.75, abs=0.01)
        np.testing.assert_allclose(d["minimiser"], [0.75, 0.0], atol=0.01)

    def test_dimension_limit(self, tmp_path):
        assert run("oracle", "--generate", "gaussian", "--m", 5, "--d", 4, "--support", 1,
                   "--out", tmp_path / "o") == 1
        assert not (tmp_path / "o").exists()

    def test_lasso_needs_tilde_mu(self, tmp_path):
        assert run("oracle", "--figure1", "--objective", "lasso", "--out", tmp_path / "o") == 1


class TestDiag:
    def test_valid_run(self, tmp_path):
        assert run("solve", "--generate", "gaussian", "--m", 40, "--d", 20, "--support", 3, "--noise", 0.1,
                   "--mu", 0.2, "--method", "sqrt-ista", "--out", tmp_path) == 0
        assert run("diag", "--trace", tmp_path / "trace.csv", "--problem", tmp_path / "problem.json",
                   "--report", tmp_path / "report.json", "--out", tmp_path) == 0
        checks = json.loads((tmp_path / "checks.json").read_text())
        assert {c["check_name"] for c in checks} >= {"monotone", "rate_bound", "sigma_ratio", "subdiff_bound"}
        assert all(c["outcome"] != "failed" for c in checks)

    def test_trace_and_problem_only_needs_tau(self, tmp_path):
        run("solve", "--figure1", "--method", "sqrt-ista", "--tau", 0.2, "--out", tmp_path)
        args = ("diag", "--trace", tmp_path / "trace.csv", "--problem", tmp_path / "problem.json")
        assert run(*args, "--out", tmp_path / "x") == 1
        assert run(*args, "--tau", 0.2, "--out", tmp_path / "y") == 0

    def test_missing_files(self, tmp_path):
        assert run("diag", "--trace", tmp_path / "t.csv", "--problem", tmp_path / "p.json",
                   "--tau", 0.1, "--out", tmp_path / "o") == 1
        assert not (tmp_path / "o").exists()

    def test_tampered_trace_fails(self, tmp_path):
        run("solve", "--figure1", "--method", "sqrt-ista", "--tau", 0.2, "--out", tmp_path)
        lines = (tmp_path / "trace.csv").read_text().splitlines()
        k, c, *rest = lines[3].split(",")
        lines[3] = ",".join([k, "5.0", *rest])
        (tmp_path / "trace.csv").write_text("\n".join(lines) + "\n")
        assert run("diag", "--trace", tmp_path / "trace.csv", "--problem", tmp_path / "problem.json",
                   "--report", tmp_path / "report.json", "--out", tmp_path) == 2


def test_no_command():
    assert main([]) == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sqrtista", "solve", "--figure1", "--method", "sqrt-ista",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "report.json").exists()
