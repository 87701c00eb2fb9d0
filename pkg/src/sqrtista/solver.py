"""SQRT-ISTA, its group variant, and the classical ISTA baseline.

All three share one loop. Each iteration takes a Landweber step
``h = f + tau A^T (g - A f)`` and thresholds it:

* SQRT-ISTA:  ``f+ = S_{2 tau mu sigma}(h)`` with ``sigma = ||A f - g||``
  recomputed after every step;
* ISTA:       ``f+ = S_{tau tilde_mu}(h)`` (fixed threshold, Lasso cost).

Equivalently SQRT-ISTA is a proximal-gradient method on
``||Af - g|| + mu ||f||_1`` with the iterate-dependent step
``gamma_k = tau sigma_k``.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .objective import Problem
from .operator import cached_norm_estimate, default_stepsize
from .prox import _norm

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("k", "cost", "sigma", "step_norm", "kkt_dist")


class Status(str, enum.Enum):
    CONVERGED_MINIMISER = "converged_minimiser"
    CONVERGED_ZERO_RESIDUAL = "converged_zero_residual"
    MAX_ITER_REACHED = "max_iter_reached"


@dataclass(frozen=True)
class ZeroResidualPolicy:
    """What to do when the residual hits zero.

    ``"stop"`` ends the run; ``"restart"`` re-initialises at
    ``init + scale * (||g|| / ||A||) * z`` with seeded Gaussian ``z``, at
    most ``max_restarts`` times.
    """

    kind: str = "stop"
    scale: float = 0.1
    max_restarts: int = 3

    def __post_init__(self):
        if self.kind not in ("stop", "restart"):
            raise ValueError(f"unknown zero-residual policy {self.kind!r}")
        if self.kind == "restart" and (not self.scale > 0 or self.max_restarts < 0):
            raise ValueError("restart policy needs scale > 0 and max_restarts >= 0")

    @classmethod
    def restart(cls, scale: float = 0.1, max_restarts: int = 3) -> "ZeroResidualPolicy":
        return cls("restart", scale, max_restarts)


@dataclass
class SolverConfig:
    """Iteration controls.

    ``tau=None`` means ``safety / ||A||^2`` from a power-iteration
    estimate. ``sigma_floor`` is relative to ``||g||``.
    """

    tau: float | None = None
    safety: float = 0.98
    max_iter: int = 10_000
    step_tol: float = 1e-10
    kkt_tol: float = 1e-8
    sigma_floor: float = 1e-14
    init: np.ndarray | None = None
    zero_residual_policy: ZeroResidualPolicy = field(default_factory=ZeroResidualPolicy)
    seed: int = 0
    norm_rel_tol: float = 1e-10

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tau is not None and not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        for name in ("step_tol", "kkt_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sigma_floor < 0:
            raise ValueError("sigma_floor must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["init"] = None if self.init is None else [float(v) for v in np.asarray(self.init)]
        return d


@dataclass(frozen=True)
class IterateState:
    f: np.ndarray
    sigma: float
    k: int = 0

    @classmethod
    def start(cls, problem: Problem, f0=None) -> "IterateState":
        f = np.zeros(problem.dim) if f0 is None else np.array(f0, dtype=np.float64)
        return cls(f, _norm(problem.op.apply(f) - problem.g), 0)


class Trace:
    """Per-iteration record: ``k, cost, sigma, step_norm, kkt_dist``.

    ``step_norm`` is undefined (NaN) on row 0; ``kkt_dist`` is NaN where the
    residual is at or below the floor.
    """

    def __init__(self, method: str = "sqrt-ista", tau: float = float("nan"), mu: float = float("nan"),
                 sigma_floor: float = 0.0):
        self.method = method
        self.tau = tau
        self.mu = mu
        self.sigma_floor = sigma_floor
        self._rows: list[tuple[int, float, float, float, float]] = []

    def append(self, k, cost, sigma, step_norm, kkt_dist):
        if self._rows and k != self._rows[-1][0] + 1:
            raise ValueError("trace rows must be consecutive")
        if not self._rows and k != 0:
            raise ValueError("trace must start at k = 0")
        self._rows.append((int(k), float(cost), float(sigma), float(step_norm), float(kkt_dist)))

    @classmethod
    def from_columns(cls, columns: dict, **meta) -> "Trace":
        t = cls(**meta)
        for row in zip(*(columns[c] for c in TRACE_COLUMNS)):
            t.append(*(float("nan") if v is None else v for v in row))
        return t

    def __len__(self):
        return len(self._rows)

    def _col(self, i) -> np.ndarray:
        return np.array([r[i] for r in self._rows], dtype=np.float64)

    @property
    def k(self) -> np.ndarray:
        return np.array([r[0] for r in self._rows], dtype=np.int64)

    @property
    def cost(self) -> np.ndarray:
        return self._col(1)

    @property
    def sigma(self) -> np.ndarray:
        return self._col(2)

    @property
    def step_norm(self) -> np.ndarray:
        return self._col(3)

    @property
    def kkt_dist(self) -> np.ndarray:
        return self._col(4)

    def rows(self):
        return list(self._rows)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        # bitwise, with NaN == NaN
        return len(self) == len(other) and all(
            np.array_equal(np.array(a), np.array(b), equal_nan=True) for a, b in zip(self._rows, other._rows)
        )

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for k, *vals in self._rows:
            w.writerow([k] + ["" if math.isnan(v) else repr(v) for v in vals])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, **meta) -> "Trace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != TRACE_COLUMNS:
                raise ValueError(f"{path}: expected header {','.join(TRACE_COLUMNS)}")
            t = cls(**meta)
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(TRACE_COLUMNS):
                    raise ValueError(f"{path}:{line_no}: expected {len(TRACE_COLUMNS)} fields")
                t.append(int(row[0]), *(float(c) if c.strip() else float("nan") for c in row[1:]))
        return t

    def to_dict(self) -> dict:
        cols = {c: [] for c in TRACE_COLUMNS}
        for row in self._rows:
            for c, v in zip(TRACE_COLUMNS, row):
                cols[c].append(None if isinstance(v, float) and math.isnan(v) else v)
        return {"method": self.method, "tau": self.tau, "mu": self.mu,
                "sigma_floor": self.sigma_floor, "columns": cols}

    @classmethod
    def from_dict(cls, d: dict) -> "Trace":
        return cls.from_columns(d["columns"], method=d.get("method", "sqrt-ista"), tau=d.get("tau", float("nan")),
                                mu=d.get("mu", float("nan")), sigma_floor=d.get("sigma_floor", 0.0))

    def __repr__(self):
        return f"Trace(method={self.method!r}, rows={len(self)})"


@dataclass
class SolveReport:
    final: IterateState
    status: Status
    fixed_point_residual: float
    trace: Trace
    tau: float
    method: str
    restarts: int = 0
    init: np.ndarray | None = None
    tilde_mu: float | None = None
    norm_estimate: float | None = None
    config: SolverConfig | None = None

    @property
    def f(self) -> np.ndarray:
        return self.final.f

    @property
    def sigma(self) -> float:
        return self.final.sigma

    @property
    def converged(self) -> bool:
        return self.status is not Status.MAX_ITER_REACHED

    @property
    def status_label(self) -> str:
        if self.restarts:
            return f"restarted({self.restarts}):{self.status.value}"
        return self.status.value

    def to_dict(self, include_trace: bool = True) -> dict:
        last = self.trace.rows()[-1]
        d = {
            "method": self.method,
            "status": self.status.value,
            "status_label": self.status_label,
            "restarts": self.restarts,
            "iterations": self.final.k,
            "tau": self.tau,
            "mu": self.trace.mu,
            "tilde_mu": self.tilde_mu,
            "norm_estimate": self.norm_estimate,
            "final": {"f": [float(v) for v in self.final.f], "sigma": self.final.sigma},
            "final_cost": last[1],
            "final_kkt_dist": None if math.isnan(last[4]) else last[4],
            "fixed_point_residual": self.fixed_point_residual,
            "init": None if self.init is None else [float(v) for v in self.init],
            "config": None if self.config is None else self.config.to_dict(),
        }
        if include_trace:
            d["trace"] = self.trace.to_dict()
        return d

    def to_json(self, path=None, include_trace: bool = True) -> str:
        text = json.dumps(self.to_dict(include_trace), indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


# --------------------------------------------------------------------------
# single steps


def _landweber(problem: Problem, f: np.ndarray, tau: float, atr: np.ndarray | None = None) -> np.ndarray:
    if atr is None:
        atr = problem.op.apply_adjoint(problem.op.apply(f) - problem.g)
    return f - tau * atr


def sqrt_ista_step(state: IterateState, problem: Problem, tau: float) -> IterateState:
    """One SQRT-ISTA update ``(f_k, sigma_k) -> (f_{k+1}, sigma_{k+1})``.

    At zero residual the threshold vanishes and the state is returned
    unchanged (apart from the counter).
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if state.sigma == 0.0:
        return IterateState(state.f, state.sigma, state.k + 1)
    h = _landweber(problem, state.f, tau)
    f = problem.penalty.prox(h, 2.0 * tau * problem.mu * state.sigma)
    return IterateState(f, _norm(problem.op.apply(f) - problem.g), state.k + 1)


def ista_step(f, problem: Problem, tilde_mu: float, tau: float) -> np.ndarray:
    """One ISTA update for ``||Af - g||^2 + tilde_mu * penalty(f)``."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if tilde_mu < 0:
        raise ValueError("tilde_mu must be nonnegative")
    f = np.asarray(f, dtype=np.float64)
    return problem.penalty.prox(_landweber(problem, f, tau), tau * tilde_mu)


# --------------------------------------------------------------------------
# full solves


def resolve_tau(problem: Problem, config: SolverConfig) -> tuple[float, float]:
    """Return ``(tau, ||A|| estimate)``, validating ``tau < 2 / ||A||^2``."""
    est = cached_norm_estimate(problem.op, rel_tol=config.norm_rel_tol, seed=config.seed)
    if config.tau is None:
        tau = default_stepsize(est, config.safety)
    else:
        tau = float(config.tau)
        if not tau > 0 or tau * est.inflated**2 >= 2.0:
            raise ValueError(
                f"tau = {tau} outside (0, 2/||A||^2) with ||A|| <= {est.inflated:.6g}"
            )
    return tau, est.value


class _Loop:
    """State shared by the three solvers; only thresholds and costs differ."""

    def __init__(self, problem: Problem, config: SolverConfig, method: str, tilde_mu: float | None = None):
        self.problem = problem
        self.config = config
        self.method = method
        self.tilde_mu = tilde_mu
        self.is_sqrt = tilde_mu is None
        self.tau, self.norm = resolve_tau(problem, config)
        self.floor = config.sigma_floor * _norm(problem.g)

    def threshold(self, sigma: float) -> float:
        if self.is_sqrt:
            return 2.0 * self.tau * self.problem.mu * sigma
        return self.tau * self.tilde_mu

    def evaluate(self, f):
        p = self.problem
        r = p.op.apply(f) - p.g
        sigma = _norm(r)
        atr = p.op.apply_adjoint(r)
        pen = p.penalty.value(f)
        if self.is_sqrt:
            c = sigma + p.mu * pen
            kkt = p.penalty.subgradient_distance(f, atr / sigma, p.mu) if sigma > self.floor else math.nan
        else:
            c = sigma * sigma + self.tilde_mu * pen
            kkt = p.penalty.subgradient_distance(f, 2.0 * atr, self.tilde_mu)
        return sigma, atr, c, kkt

    def run(self, f0: np.ndarray):
        cfg = self.config
        trace = Trace(self.method, self.tau, self.problem.mu if self.is_sqrt else self.tilde_mu, self.floor)
        f = f0
        sigma, atr, c, kkt = self.evaluate(f)
        step = math.nan
        trace.append(0, c, sigma, step, kkt)
        k = 0
        while True:
            if self.is_sqrt and sigma <= self.floor:
                status = Status.CONVERGED_ZERO_RESIDUAL
                break
            if k >= 1 and step <= cfg.step_tol * max(1.0, _norm(f)) and kkt <= cfg.kkt_tol:
                status = Status.CONVERGED_MINIMISER
                break
            if k >= cfg.max_iter:
                status = Status.MAX_ITER_REACHED
                break
            f_new = self.problem.penalty.prox(f - self.tau * atr, self.threshold(sigma))
            step = _norm(f_new - f)
            f = f_new
            k += 1
            sigma, atr, c, kkt = self.evaluate(f)
            trace.append(k, c, sigma, step, kkt)
        fpr = _norm(f - self.problem.penalty.prox(f - self.tau * atr, self.threshold(sigma)))
        return IterateState(f, sigma, k), status, fpr, trace


def _solve(problem: Problem, config: SolverConfig, method: str, tilde_mu: float | None = None) -> SolveReport:
    loop = _Loop(problem, config, method, tilde_mu)
    d = problem.dim
    base = np.zeros(d) if config.init is None else np.array(config.init, dtype=np.float64)
    if base.shape != (d,):
        raise ValueError(f"init must have length {d}")
    policy = config.zero_residual_policy
    rng = np.random.default_rng(config.seed)
    f0 = base
    restarts = 0
    while True:
        final, status, fpr, trace = loop.run(f0)
        if (status is not Status.CONVERGED_ZERO_RESIDUAL or policy.kind != "restart"
                or restarts >= policy.max_restarts or loop.norm == 0.0):
            break
        restarts += 1
        scale = policy.scale * _norm(problem.g) / loop.norm
        f0 = base + scale * rng.standard_normal(d)
        logger.info("%s: zero residual at k=%d, restart %d", method, final.k, restarts)
    return SolveReport(final, status, fpr, trace, loop.tau, method, restarts, f0,
                       tilde_mu, loop.norm, config)


def solve_sqrt_ista(problem: Problem, config: SolverConfig | None = None) -> SolveReport:
    """Minimise ``||Af - g|| + mu * ||f||_1`` (plain or weighted) by SQRT-ISTA.

    Stops with

    * ``CONVERGED_MINIMISER`` when the last step and the KKT distance are
      both below tolerance,
    * ``CONVERGED_ZERO_RESIDUAL`` when ``sigma <= sigma_floor * ||g||``
      (the limit need not be a minimiser then),
    * ``MAX_ITER_REACHED`` otherwise.
    """
    if problem.penalty.kind == "group":
        raise ValueError("group penalty: use solve_group_sqrt_ista")
    return _solve(problem, config or SolverConfig(), "sqrt-ista")


def solve_group_sqrt_ista(problem: Problem, config: SolverConfig | None = None) -> SolveReport:
    """Group variant of :func:`solve_sqrt_ista` (block soft-thresholding per group)."""
    if problem.penalty.kind != "group":
        raise ValueError("solve_group_sqrt_ista requires a group penalty")
    return _solve(problem, config or SolverConfig(), "group-sqrt-ista")


def solve_ista(problem: Problem, tilde_mu: float, config: SolverConfig | None = None) -> SolveReport:
    """Minimise the Lasso cost ``||Af - g||^2 + tilde_mu * penalty(f)`` by ISTA.

    ``problem.mu`` is ignored; the penalty shape is reused.
    """
    if not tilde_mu >= 0:
        raise ValueError(f"tilde_mu must be nonnegative, got {tilde_mu}")
    return _solve(problem, config or SolverConfig(), "ista", float(tilde_mu))


def fixed_point_residual(problem: Problem, f, tau: float) -> float:
    """``||f - S_{2 tau mu sigma}(f + tau A^T (g - A f))||`` with ``sigma = ||Af - g||``."""
    f = np.asarray(f, dtype=np.float64)
    nxt = sqrt_ista_step(IterateState(f, _norm(problem.op.apply(f) - problem.g)), problem, tau)
    return _norm(f - nxt.f)
