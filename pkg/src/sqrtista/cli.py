"""Command-line runner: ``sqrtista {solve,compare,sweep,oracle,diag}``.

Every command writes plot-ready CSV/JSON into ``--out`` (default:
``$SQRTISTA_OUTDIR`` or ``./sqrtista-out``). Exit codes: 0 success,
1 usage or IO error, 2 run finished but did not meet its goal
(iteration limit, failed check).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .objective import Problem
from .problems import (
    ProblemFormatError,
    load_problem,
    make_deconvolution_1d,
    make_figure1,
    make_gaussian_sensing,
    problem_to_dict,
)
from .prox import PenaltySpec
from .solver import (
    SolverConfig,
    SolveReport,
    Status,
    Trace,
    ZeroResidualPolicy,
    solve_group_sqrt_ista,
    solve_ista,
    solve_sqrt_ista,
)

log = logging.getLogger("sqrtista")

OUTDIR_ENV = "SQRTISTA_OUTDIR"
METHODS = ("sqrt-ista", "ista", "group-sqrt-ista")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_source(p: argparse.ArgumentParser):
    src = p.add_argument_group("problem source (exactly one)")
    src.add_argument("--problem", type=Path, help="problem JSON file")
    src.add_argument("--figure1", action="store_true", help="A=(2 1), g=(2), mu=1")
    src.add_argument("--generate", choices=("gaussian", "deconv"), help="synthetic generator")
    gen = p.add_argument_group("generator options")
    gen.add_argument("--m", type=int, default=40)
    gen.add_argument("--d", type=int, default=100)
    gen.add_argument("--support", type=int, default=5)
    gen.add_argument("--kernel-width", type=int, default=9)
    gen.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--mu", type=float, help="override the problem's mu")
    p.add_argument("--group-size", type=int, help="contiguous groups of this size (group method)")
    p.add_argument("--seed", type=int, default=0)


def _add_solver(p: argparse.ArgumentParser):
    s = p.add_argument_group("solver")
    s.add_argument("--tau", type=float, help="stepsize (default: safety/||A||^2)")
    s.add_argument("--safety", type=float, default=0.98)
    s.add_argument("--max-iter", type=int, default=20_000)
    s.add_argument("--step-tol", type=float, default=1e-10)
    s.add_argument("--kkt-tol", type=float, default=1e-8)
    s.add_argument("--sigma-floor", type=float, default=1e-14)
    s.add_argument("--restart", nargs=2, metavar=("SCALE", "MAX"),
                   help="restart with a seeded perturbation on zero residual")


def _add_out(p: argparse.ArgumentParser):
    p.add_argument("--out", type=Path, default=None,
                   help=f"output directory (default ${OUTDIR_ENV} or ./sqrtista-out)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sqrtista", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("solve", help="run one solver and write trace.csv, report.json")
    _add_source(p)
    _add_solver(p)
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--tilde-mu", type=float, help="Lasso parameter (ista)")
    _add_out(p)

    p = sub.add_parser("compare", help="sqrt-Lasso vs Lasso with tilde_mu = 2 mu sigma*")
    _add_source(p)
    _add_solver(p)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--strict", action="store_true", help="exit 2 when the check is inapplicable")
    _add_out(p)

    p = sub.add_parser("sweep", help="support recovery over noise x parameter grids")
    _add_source(p)
    _add_solver(p)
    p.add_argument("--noises", type=_floats, required=True)
    p.add_argument("--mus", type=_floats, required=True, help="sqrt-Lasso mu values")
    p.add_argument("--tilde-mus", type=_floats, required=True, help="Lasso tilde_mu values")
    _add_out(p)

    p = sub.add_parser("oracle", help="grid minimisation for problems of dimension <= 3")
    _add_source(p)
    p.add_argument("--objective", choices=("sqrt", "lasso"), default="sqrt")
    p.add_argument("--tilde-mu", type=float)
    p.add_argument("--bounds", type=float, nargs=2, default=(-0.5, 2.0), metavar=("LO", "HI"))
    p.add_argument("--res", type=float, default=0.005)
    _add_out(p)

    p = sub.add_parser("diag", help="re-run every trace check on a saved trace")
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--problem", type=Path, required=True)
    p.add_argument("--report", type=Path, help="report.json (supplies tau, final and initial iterate)")
    p.add_argument("--tau", type=float)
    p.add_argument("--norm", type=float, help="||A|| (default: exact for dense matrices)")
    _add_out(p)
    return ap


# --------------------------------------------------------------------------
# helpers


def _out_dir(args) -> Path:
    if args.out is not None:
        return args.out
    return Path(os.environ.get(OUTDIR_ENV, "sqrtista-out"))


def _load_source(args, sweep_noise: float | None = None) -> tuple[Problem, np.ndarray | None]:
    sources = [args.problem is not None, bool(args.figure1), args.generate is not None]
    if sum(sources) != 1:
        raise UsageError("give exactly one of --problem, --figure1, --generate")
    truth = None
    mu = args.mu
    noise = args.noise if sweep_noise is None else sweep_noise
    try:
        if args.problem is not None:
            problem = load_problem(args.problem)
        elif args.figure1:
            problem = make_figure1()
        elif args.generate == "gaussian":
            gp = make_gaussian_sensing(args.m, args.d, args.support, noise, mu if mu is not None else 0.1, args.seed)
            problem, truth = gp.problem, gp.ground_truth
        else:
            gp = make_deconvolution_1d(args.d, args.kernel_width, noise, mu if mu is not None else 0.05, args.seed)
            problem, truth = gp.problem, gp.ground_truth
    except OSError as exc:
        raise UsageError(f"cannot read problem: {exc}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if mu is not None:
        problem = problem.with_mu(mu)
    if getattr(args, "group_size", None):
        gs = args.group_size
        if gs < 1:
            raise UsageError("--group-size must be positive")
        d = problem.dim
        problem = problem.with_penalty(PenaltySpec.group([list(range(i, min(d, i + gs))) for i in range(0, d, gs)], d))
    return problem, truth


def _config(args) -> SolverConfig:
    policy = ZeroResidualPolicy()
    if args.restart:
        try:
            policy = ZeroResidualPolicy.restart(float(args.restart[0]), int(args.restart[1]))
        except ValueError as exc:
            raise UsageError(f"--restart: {exc}") from None
    try:
        return SolverConfig(tau=args.tau, safety=args.safety, max_iter=args.max_iter, step_tol=args.step_tol,
                            kkt_tol=args.kkt_tol, sigma_floor=args.sigma_floor,
                            zero_residual_policy=policy, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _run(problem: Problem, method: str, config: SolverConfig, tilde_mu: float | None = None) -> SolveReport:
    try:
        if method == "sqrt-ista":
            return solve_sqrt_ista(problem, config)
        if method == "group-sqrt-ista":
            if problem.penalty.kind != "group":
                problem = problem.with_penalty(PenaltySpec.group(
                    [[i] for i in range(problem.dim)], problem.dim))
            return solve_group_sqrt_ista(problem, config)
        if tilde_mu is None:
            raise UsageError("--method ista needs --tilde-mu")
        return solve_ista(problem, tilde_mu, config)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _summary(rep: SolveReport) -> str:
    kkt = rep.trace.kkt_dist[-1]
    return (f"{rep.method}: status={rep.status_label} iterations={rep.final.k} "
            f"cost={rep.trace.cost[-1]:.12g} sigma={rep.sigma:.6g} "
            f"kkt_dist={'n/a' if math.isnan(kkt) else f'{kkt:.3g}'}")


def f1_score(estimate: np.ndarray, truth: np.ndarray) -> float:
    """F1 of the estimated support (``|f_i| > 1e-6 ||f||_inf``) against the true one."""
    peak = float(np.max(np.abs(estimate))) if estimate.size else 0.0
    est = np.abs(estimate) > 1e-6 * peak if peak > 0 else np.zeros(estimate.shape, bool)
    tru = truth != 0
    tp = int(np.count_nonzero(est & tru))
    denom = int(np.count_nonzero(est)) + int(np.count_nonzero(tru))
    return 1.0 if denom == 0 else 2.0 * tp / denom


# --------------------------------------------------------------------------
# commands


def cmd_solve(args) -> int:
    problem, _ = _load_source(args)
    config = _config(args)
    rep = _run(problem, args.method, config, args.tilde_mu)
    out = _out_dir(args)
    _write(out / "trace.csv", rep.trace.to_csv())
    _write(out / "report.json", rep.to_json())
    _write(out / "problem.json", _json(problem_to_dict(problem)))
    print(_summary(rep))
    return 2 if rep.status is Status.MAX_ITER_REACHED else 0


def cmd_compare(args) -> int:
    problem, _ = _load_source(args)
    config = _config(args)
    sq = _run(problem, "sqrt-ista", config)
    check, ista = dg.lasso_equivalence(problem, sq, args.tol, config)
    out = _out_dir(args)
    _write(out / "sqrt_report.json", sq.to_json())
    if ista is not None:
        _write(out / "ista_report.json", ista.to_json())
    _write(out / "equivalence.json", _json(check.to_dict()))
    print(_summary(sq))
    if ista is not None:
        print(_summary(ista))
    print(f"equivalence: {check.outcome} ({check.details})")
    if check.outcome == dg.INAPPLICABLE:
        print("notice: equivalence needs a nonzero residual at the sqrt-Lasso solution; check skipped")
        return 2 if args.strict else 0
    return 0 if check.passed else 2


def cmd_sweep(args) -> int:
    if args.generate is None:
        raise UsageError("sweep needs --generate (ground truth is required)")
    config = _config(args)
    rows = []
    for noise in args.noises:
        problem, truth = _load_source(args, sweep_noise=noise)
        for method, params in (("sqrt-ista", args.mus), ("ista", args.tilde_mus)):
            for param in params:
                if method == "sqrt-ista":
                    rep = _run(problem.with_mu(param), method, config)
                else:
                    rep = _run(problem, method, config, param)
                rows.append((noise, method, param, f1_score(rep.f, truth), float(rep.trace.cost[-1]), rep.status_label))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("noise_sigma", "method", "param", "f1", "cost", "status"))
    for noise, method, param, f1, c, status in rows:
        w.writerow((repr(noise), method, repr(param), repr(f1), repr(c), status))
    out = _out_dir(args)
    _write(out / "sweep.csv", buf.getvalue())
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'}")
    return 0


def cmd_oracle(args) -> int:
    problem, _ = _load_source(args)
    if args.objective == "lasso" and args.tilde_mu is None:
        raise UsageError("--objective lasso needs --tilde-mu")
    try:
        res = dg.grid_oracle(problem, tuple(args.bounds), args.res, args.objective, args.tilde_mu)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args)
    _write(out / "grid.csv", res.to_csv())
    _write(out / "oracle.json", _json({
        "objective": args.objective, "tilde_mu": args.tilde_mu,
        "minimiser": [float(v) for v in res.minimiser], "min_value": res.min_value,
        "grid_resolution": res.grid_resolution, "bounds": [list(b) for b in res.bounds],
    }))
    print(f"oracle ({args.objective}): min {res.min_value:.6g} at {np.array2string(res.minimiser, precision=6)}")
    return 0


def cmd_diag(args) -> int:
    try:
        problem = load_problem(args.problem)
        report = json.loads(args.report.read_text()) if args.report else None
        tau = args.tau if args.tau is not None else (report or {}).get("tau")
        trace_meta = (report or {}).get("trace", {})
        floor = trace_meta.get("sigma_floor", 1e-14 * float(np.sqrt(np.sum(problem.g ** 2))))
        trace = Trace.from_csv(args.trace, tau=tau if tau is not None else math.nan,
                               mu=problem.mu, sigma_floor=floor)
    except (OSError, ProblemFormatError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(str(exc)) from None
    if tau is None:
        raise UsageError("diag needs --tau or --report")
    if args.norm is not None:
        norm = args.norm
    else:
        norm = float(np.linalg.norm(problem.op.to_dense(), 2))
    f_star = f0 = None
    if report is not None:
        f_star = report["final"]["f"]
        f0 = report["init"] if report.get("init") is not None else [0.0] * problem.dim
    reports = dg.run_trace_checks(trace, problem, tau, norm * norm, f_star, f0)
    out = _out_dir(args)
    _write(out / "checks.json", dg.checks_to_json(reports))
    for r in reports:
        print(r)
    return 2 if any(r.outcome == dg.FAILED for r in reports) else 0


COMMANDS = {"solve": cmd_solve, "compare": cmd_compare, "sweep": cmd_sweep,
            "oracle": cmd_oracle, "diag": cmd_diag}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors exit 1, --help exits 0
        return exc.code if isinstance(exc.code, int) else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sqrtista {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
