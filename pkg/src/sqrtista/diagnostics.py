"""Post-hoc convergence checks on traces, Lasso equivalence, and a grid oracle.

Every check returns a :class:`CheckReport` whose outcome is ``"passed"``,
``"failed"`` or ``"inapplicable"`` (a hypothesis of the underlying
inequality does not hold, e.g. the stepsize is too large for the rate
bound or the residual vanished).
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .objective import Problem, cost
from .prox import _norm, lasso_kkt_distance
from .solver import SolverConfig, SolveReport, Status, Trace, solve_ista

PASSED, FAILED, INAPPLICABLE = "passed", "failed", "inapplicable"


@dataclass
class CheckReport:
    check_name: str
    outcome: str
    worst_violation: float
    tolerance: float
    location: int | list | None = None
    details: str = ""
    data: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.outcome == PASSED

    @property
    def applicable(self) -> bool:
        return self.outcome != INAPPLICABLE

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return repr(v)
            if isinstance(v, (np.floating, np.integer)):
                return clean(v.item())
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            return v

        return clean({
            "check_name": self.check_name,
            "outcome": self.outcome,
            "passed": self.passed,
            "worst_violation": self.worst_violation,
            "tolerance": self.tolerance,
            "location": self.location,
            "details": self.details,
            "data": self.data,
        })

    def __str__(self):
        return f"{self.check_name}: {self.outcome} (worst {self.worst_violation:.3g}, tol {self.tolerance:.3g})"


def _report(name, violations, tol, details="", data=None, index=None) -> CheckReport:
    """Build a report from per-row violations (``passed`` iff all <= tol)."""
    v = np.asarray(violations, dtype=np.float64)
    if v.size == 0:
        return CheckReport(name, PASSED, 0.0, tol, None, details or "no rows to check", data or {})
    i = int(np.argmax(v))
    worst = float(v[i])
    loc = int(index[i]) if index is not None else i
    return CheckReport(name, PASSED if worst <= tol else FAILED, worst, tol, loc, details, data or {})


def _inapplicable(name, tol, why) -> CheckReport:
    return CheckReport(name, INAPPLICABLE, 0.0, tol, None, why)


def checks_to_json(reports: Sequence[CheckReport], path=None) -> str:
    text = json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


# --------------------------------------------------------------------------
# trace checks


def check_monotone(trace: Trace, slack: float = 1e-12) -> CheckReport:
    """Cost never increases by more than ``slack * cost(0)``."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    c = trace.cost
    tol = slack * abs(c[0])
    jumps = np.maximum(c[1:] - c[:-1], 0.0)
    return _report("monotone", jumps, tol, index=trace.k[1:])


def check_boundedness(trace: Trace, slack: float = 1e-12) -> CheckReport:
    """``sigma_k + mu * penalty(f_k) <= cost(0)`` along the trace."""
    c = trace.cost
    return _report("boundedness", c - c[0], slack * max(1.0, abs(c[0])), index=trace.k)


def check_rate_bound(trace: Trace, problem: Problem, f_star, f0, tau: float, norm_sq: float,
                     rel_slack: float = 1e-9) -> CheckReport:
    """``cost(f_k) - cost(f*) <= ||f_0 - f*||^2 / (2 tau sigma_min k)`` for ``k >= 1``.

    Requires ``tau * ||A||^2 <= 1`` and ``sigma_min > sigma_floor``, with
    ``sigma_min`` the smallest residual observed on the trace. Per row the
    slack is ``rel_slack * (bound + |cost(f*)|)``.
    """
    name = "rate_bound"
    if tau * norm_sq > 1.0 + 1e-12:
        return _inapplicable(name, rel_slack, f"tau*||A||^2 = {tau * norm_sq:.6g} > 1")
    sig = trace.sigma
    smin = float(np.min(sig))
    if not smin > trace.sigma_floor:
        return _inapplicable(name, rel_slack, f"sigma_min = {smin:.3g} <= sigma_floor")
    if len(trace) < 2:
        return _report(name, [], rel_slack)
    f_star = np.asarray(f_star, dtype=np.float64)
    c_star = cost(problem, f_star)
    dist2 = float(np.sum((np.asarray(f0, dtype=np.float64) - f_star) ** 2))
    k = trace.k[1:].astype(np.float64)
    lhs = trace.cost[1:] - c_star
    rhs = dist2 / (2.0 * tau * smin * k)
    scale = rhs + abs(c_star)
    with np.errstate(divide="ignore", invalid="ignore"):
        viol = np.where(scale > 0, (lhs - rhs) / scale, np.where(lhs > rhs, np.inf, 0.0))
    return _report(name, viol, rel_slack, f"sigma_min={smin:.6g}, cost*={c_star:.12g}",
                   {"sigma_min": smin, "cost_star": c_star}, index=trace.k[1:])


def check_asymptotic_regularity(trace: Trace, norm_sq: float, tau: float,
                                rel_slack: float = 1e-9, min_steps: int = 10) -> CheckReport:
    """Summable squared steps plus a decreasing-tail proxy for ``||f_{k+1} - f_k|| -> 0``.

    Energy bound: ``(2/tau - ||A||^2) sum_k step_k^2 <= 2 sigma_max cost(0)``.
    Tail test (only with at least ``min_steps`` steps): the largest step in
    the last 10% does not exceed the largest step in the first 10%.
    """
    name = "asymptotic_regularity"
    if not tau * norm_sq < 2.0:
        return _inapplicable(name, rel_slack, "tau >= 2/||A||^2")
    steps = trace.step_norm[1:]
    energy = (2.0 / tau - norm_sq) * float(np.sum(steps * steps))
    bound = float(np.max(trace.sigma)) * 2.0 * trace.cost[0]
    if bound > 0:
        e_viol = energy / bound - 1.0
    else:
        e_viol = -1.0 if energy == 0 else math.inf
    data = {"energy": energy, "energy_bound": bound}
    viols = [e_viol]
    n = steps.shape[0]
    if n >= min_steps:
        n10 = max(1, n // 10)
        head, tail = float(np.max(steps[:n10])), float(np.max(steps[-n10:]))
        data.update(head_max=head, tail_max=tail)
        if head > 0:
            viols.append(tail / head - 1.0)
        else:
            viols.append(0.0 if tail == 0 else math.inf)
        details = "energy and tail tests"
    else:
        details = f"tail test skipped ({n} steps < {min_steps})"
    r = _report(name, viols, rel_slack, details, data)
    r.location = None
    return r


def check_residual_lipschitz(trace: Trace, norm_sq: float, rel_slack: float = 1e-9) -> CheckReport:
    """``|sigma_{k+1} - sigma_k| <= ||A|| * ||f_{k+1} - f_k||``.

    An absolute allowance of ``8 eps max(sigma)`` absorbs the cancellation
    in differencing two rounded norms.
    """
    s = trace.sigma
    lhs = np.abs(np.diff(s))
    rhs = math.sqrt(norm_sq) * trace.step_norm[1:] * (1.0 + rel_slack)
    tol = 8.0 * np.finfo(float).eps * float(np.max(s))
    return _report("residual_lipschitz", lhs - rhs, tol, index=trace.k[1:])


def check_sigma_ratio(trace: Trace, problem: Problem, tau: float, norm_sq: float,
                      abs_slack: float = 1e-9) -> CheckReport:
    """``sigma_{k+1} / sigma_k <= 1 + tau ||A||^2 + c tau mu ||A||`` where ``sigma_k > floor``.

    ``c`` is the penalty's prox shift factor (``sqrt(d)`` for plain l1).
    """
    norm = math.sqrt(norm_sq)
    const = 1.0 + tau * norm_sq + problem.penalty.shift_factor(problem.dim) * tau * problem.mu * norm
    s = trace.sigma
    ok = s[:-1] > trace.sigma_floor
    skipped = int(np.count_nonzero(~ok))
    ratio = s[1:][ok] / s[:-1][ok]
    r = _report("sigma_ratio", ratio - const, abs_slack,
                f"C={const:.6g}, skipped {skipped} rows at or below sigma_floor",
                {"constant": const, "skipped": skipped,
                 "max_ratio": float(np.max(ratio)) if ratio.size else None},
                index=trace.k[1:][ok])
    return r


def check_subdiff_bound(trace: Trace, norm_sq: float, tau: float, rel_slack: float = 1e-9) -> CheckReport:
    """``kkt_dist(k+1) <= (1/tau + 2||A||^2) * step_norm(k+1) / sigma_k``.

    Rows with ``sigma_k`` or ``sigma_{k+1}`` at or below the floor are
    skipped and counted. Also records the largest observed ratio
    ``kkt_dist * sigma_k / step_norm``.
    """
    name = "subdiff_bound"
    c1 = 1.0 / tau + 2.0 * norm_sq
    s = trace.sigma
    kkt = trace.kkt_dist[1:]
    step = trace.step_norm[1:]
    ok = (s[:-1] > trace.sigma_floor) & np.isfinite(kkt)
    skipped = int(np.count_nonzero(~ok))
    if len(trace) > 1 and not np.any(ok):
        return _inapplicable(name, rel_slack, f"all {skipped} rows at or below sigma_floor")
    bound = c1 * step[ok] / s[:-1][ok]
    with np.errstate(divide="ignore", invalid="ignore"):
        viol = np.where(bound > 0, kkt[ok] / bound - 1.0, np.where(kkt[ok] > 0, np.inf, -1.0))
        ratios = np.where(step[ok] > 0, kkt[ok] * s[:-1][ok] / step[ok], 0.0)
    max_ratio = float(np.max(ratios)) if ratios.size else 0.0
    return _report(name, viol, rel_slack, f"C1={c1:.6g}, skipped {skipped} rows",
                   {"C1": c1, "max_ratio": max_ratio, "skipped": skipped}, index=trace.k[1:][ok])


def check_minimiser_report(report: SolveReport, kkt_tol: float = 1e-8) -> CheckReport:
    """A ``CONVERGED_MINIMISER`` report is a fixed point and satisfies the KKT test."""
    name = "fixed_point_minimiser"
    if report.status is not Status.CONVERGED_MINIMISER:
        return _inapplicable(name, 0.0, f"status {report.status.value}")
    step_tol = report.config.step_tol if report.config else 1e-10
    fp_bound = 10.0 * step_tol * max(1.0, _norm(report.f))
    kkt = report.trace.kkt_dist[-1]
    viol = [report.fixed_point_residual - fp_bound, kkt - kkt_tol]
    return _report(name, viol, 0.0, f"fpr={report.fixed_point_residual:.3g}, kkt={kkt:.3g}",
                   {"fixed_point_residual": report.fixed_point_residual, "kkt_dist": float(kkt)})


def run_trace_checks(trace: Trace, problem: Problem, tau: float, norm_sq: float,
                     f_star=None, f0=None) -> list[CheckReport]:
    """All trace-level checks; the rate check needs ``f_star`` and ``f0``."""
    out = [
        check_monotone(trace),
        check_boundedness(trace),
        check_asymptotic_regularity(trace, norm_sq, tau),
        check_residual_lipschitz(trace, norm_sq),
        check_sigma_ratio(trace, problem, tau, norm_sq),
        check_subdiff_bound(trace, norm_sq, tau),
    ]
    if f_star is not None and f0 is not None:
        out.append(check_rate_bound(trace, problem, f_star, f0, tau, norm_sq))
    else:
        out.append(_inapplicable("rate_bound", 1e-9, "no final iterate / initial point supplied"))
    return out


# --------------------------------------------------------------------------
# Lasso equivalence


def lasso_equivalence(problem: Problem, sqrt_report: SolveReport, tol: float = 1e-6,
                      config: SolverConfig | None = None) -> tuple[CheckReport, SolveReport | None]:
    """Run ISTA with ``tilde_mu = 2 mu sigma*`` and compare minimisers.

    Passes when ``||f_lasso - f_sqrt|| <= tol * max(1, ||f_sqrt||)`` and the
    Lasso KKT distance at ``f_sqrt`` is at most ``tol``.
    """
    name = "lasso_equivalence"
    if sqrt_report.status is not Status.CONVERGED_MINIMISER:
        return _inapplicable(name, tol, f"sqrt-Lasso run ended with {sqrt_report.status.value}"), None
    f_sqrt = sqrt_report.f
    sigma = sqrt_report.sigma
    if not sigma > sqrt_report.trace.sigma_floor:
        return _inapplicable(name, tol, "zero residual at the sqrt-Lasso solution"), None
    tilde_mu = 2.0 * problem.mu * sigma
    cfg = config or sqrt_report.config or SolverConfig()
    ista = solve_ista(problem, tilde_mu, cfg)
    gap = _norm(ista.f - f_sqrt) / max(1.0, _norm(f_sqrt))
    kkt = lasso_kkt_distance(f_sqrt, problem, tilde_mu)
    res_l = _norm(problem.op.apply(ista.f) - problem.g)
    mu_back = tilde_mu / (2.0 * res_l) if res_l > 0 else math.nan
    data = {"tilde_mu": tilde_mu, "relative_gap": gap, "lasso_kkt_at_sqrt": kkt,
            "ista_status": ista.status.value, "ista_iterations": ista.final.k,
            "mu_recovered": mu_back}
    rep = _report(name, [gap, kkt], tol, f"tilde_mu={tilde_mu:.12g}, gap={gap:.3g}, kkt={kkt:.3g}", data)
    rep.location = None
    return rep, ista


def lasso_equivalence_check(problem: Problem, sqrt_report: SolveReport, tol: float = 1e-6,
                            config: SolverConfig | None = None) -> CheckReport:
    return lasso_equivalence(problem, sqrt_report, tol, config)[0]


# --------------------------------------------------------------------------
# grid oracle


@dataclass
class OracleResult:
    minimiser: np.ndarray
    min_value: float
    grid_resolution: float
    bounds: list[tuple[float, float]]
    axes: list[np.ndarray] = field(repr=False)
    values: np.ndarray = field(repr=False)

    def to_csv(self, path=None) -> str:
        """Rows ``(x, [y, [z,]] value)`` in C order, for contour plotting."""
        names = ["x", "y", "z"][: len(self.axes)] + ["value"]
        lines = [",".join(names)]
        for idx in itertools.product(*(range(len(a)) for a in self.axes)):
            coords = [repr(float(a[i])) for a, i in zip(self.axes, idx)]
            lines.append(",".join(coords + [repr(float(self.values[idx]))]))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _batch_penalty(problem: Problem, pts: np.ndarray) -> np.ndarray:
    pen = problem.penalty
    if pen.kind == "plain":
        return np.abs(pts).sum(axis=1)
    if pen.kind == "weighted":
        return (np.abs(pts) * pen.weights).sum(axis=1)
    out = np.zeros(pts.shape[0])
    for j, g in enumerate(pen.partition.groups):
        w = 1.0 if pen.weights is None else pen.weights[j]
        out += w * np.sqrt((pts[:, list(g)] ** 2).sum(axis=1))
    return out


def grid_oracle(problem: Problem, bounds, resolution: float, objective: str = "sqrt",
                tilde_mu: float | None = None, chunk: int = 1 << 16) -> OracleResult:
    """Exhaustive minimisation over a regular grid (problems of dimension <= 3).

    ``bounds`` is either one ``(lo, hi)`` pair for every coordinate or one
    pair per coordinate. ``objective`` is ``"sqrt"`` or ``"lasso"`` (the
    latter needs ``tilde_mu``). The grid is scanned in chunks; ties go to
    the lowest flat index, so the result does not depend on ``chunk``.
    """
    d = problem.dim
    if d > 3:
        raise ValueError(f"grid oracle supports dimension <= 3, got {d}")
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    if objective not in ("sqrt", "lasso"):
        raise ValueError(f"unknown objective {objective!r}")
    if objective == "lasso" and tilde_mu is None:
        raise ValueError("lasso objective needs tilde_mu")
    b = np.asarray(bounds, dtype=np.float64)
    if b.shape == (2,):
        b = np.tile(b, (d, 1))
    if b.shape != (d, 2) or not np.all(np.isfinite(b)) or np.any(b[:, 1] < b[:, 0]):
        raise ValueError(f"bounds must be finite (lo, hi) pairs for {d} coordinates")
    axes = [np.linspace(lo, hi, int(round((hi - lo) / resolution)) + 1) for lo, hi in b]
    shape = tuple(len(a) for a in axes)
    a_mat = problem.op.to_dense()
    n = int(np.prod(shape))
    values = np.empty(n)
    for start in range(0, n, chunk):
        idx = np.unravel_index(np.arange(start, min(n, start + chunk)), shape)
        pts = np.column_stack([ax[i] for ax, i in zip(axes, idx)])
        res = np.sqrt(((pts @ a_mat.T - problem.g) ** 2).sum(axis=1))
        pen = _batch_penalty(problem, pts)
        if objective == "sqrt":
            values[start:start + pts.shape[0]] = res + problem.mu * pen
        else:
            values[start:start + pts.shape[0]] = res**2 + tilde_mu * pen
    best = int(np.argmin(values))
    bi = np.unravel_index(best, shape)
    x = np.array([ax[i] for ax, i in zip(axes, bi)])
    return OracleResult(x, float(values[best]), float(resolution),
                        [tuple(map(float, r)) for r in b], axes, values.reshape(shape))


def load_grid_csv(path) -> list[list[float]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [[float(c) for c in row] for row in reader if row]
