"""Synthetic problem generators and problem/report file IO.

Problem files are JSON::

    {"matrix_csv": "A.csv" | [[...], ...],   # path (relative to the file) or inline rows
     "g": [...],
     "mu": 0.1,
     "penalty": "plain"
              | {"weighted": [w, ...], "c": 1e-6}
              | {"group": [[0, 1], [2], ...], "weights": [...]}}   # weights optional
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .objective import Problem
from .operator import CircularConvolution, DenseMap, load_matrix_csv, save_matrix_csv
from .prox import PenaltySpec
from .solver import SolveReport


class ProblemFormatError(ValueError):
    """Malformed or inconsistent problem file."""


@dataclass(frozen=True, eq=False)
class GeneratedProblem:
    problem: Problem
    ground_truth: np.ndarray
    noise_sigma: float
    seed: int

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.ground_truth)


def make_gaussian_sensing(m: int, d: int, support: int, noise_sigma: float, mu: float,
                          seed: int = 0) -> GeneratedProblem:
    """Gaussian sensing matrix (entries N(0, 1/m)) and a planted ``support``-sparse
    signal with unit-magnitude, random-sign entries.

    Draws happen in a fixed order (matrix, support, signs, noise), so for a
    fixed seed only the noise amplitude changes with ``noise_sigma``.
    """
    if m < 1 or d < 1:
        raise ValueError(f"dimensions must be positive, got m={m}, d={d}")
    if not 0 <= support <= d:
        raise ValueError(f"support must lie in [0, {d}], got {support}")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, d)) / math.sqrt(m)
    idx = np.sort(rng.choice(d, size=support, replace=False))
    signs = rng.choice([-1.0, 1.0], size=support)
    noise = rng.standard_normal(m)
    x = np.zeros(d)
    x[idx] = signs
    g = a @ x + noise_sigma * noise
    return GeneratedProblem(Problem(DenseMap(a), g, mu), x, float(noise_sigma), seed)


def triangular_kernel(width: int) -> np.ndarray:
    """Normalised triangular taps for offsets ``-h..h`` (``width = 2h + 1``)."""
    if width < 1 or width % 2 == 0:
        raise ValueError(f"kernel width must be a positive odd integer, got {width}")
    h = width // 2
    w = (h + 1.0) - np.abs(np.arange(-h, h + 1))
    return w / w.sum()


def make_deconvolution_1d(d: int, kernel_width: int, noise_sigma: float, mu: float,
                          seed: int = 0, n_spikes: int | None = None) -> GeneratedProblem:
    """Circular blur by a triangular kernel applied to a spike train."""
    if d < 1:
        raise ValueError("d must be positive")
    if kernel_width > d:
        raise ValueError(f"kernel width {kernel_width} exceeds signal length {d}")
    taps = triangular_kernel(kernel_width)
    h = kernel_width // 2
    op = CircularConvolution({off: w for off, w in zip(range(-h, h + 1), taps)}, d)
    if n_spikes is None:
        n_spikes = max(1, d // 16)
    if not 0 <= n_spikes <= d:
        raise ValueError("n_spikes out of range")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(d, size=n_spikes, replace=False))
    amp = rng.choice([-1.0, 1.0], size=n_spikes) * rng.uniform(0.5, 1.5, size=n_spikes)
    noise = rng.standard_normal(d)
    x = np.zeros(d)
    x[idx] = amp
    g = op.apply(x) + noise_sigma * noise
    return GeneratedProblem(Problem(op, g, mu), x, float(noise_sigma), seed)


def make_figure1() -> Problem:
    """``A = (2 1)``, ``g = (2)``, ``mu = 1``: the minimiser sits at zero residual."""
    return Problem(DenseMap([[2.0, 1.0]]), [2.0], 1.0)


# --------------------------------------------------------------------------
# IO


def penalty_to_json(pen: PenaltySpec):
    if pen.kind == "plain":
        return "plain"
    if pen.kind == "weighted":
        return {"weighted": [float(w) for w in pen.weights], "c": pen.lower_bound}
    d = {"group": [list(g) for g in pen.partition.groups]}
    if pen.weights is not None:
        d["weights"] = [float(w) for w in pen.weights]
    return d


def penalty_from_json(obj, d: int) -> PenaltySpec:
    try:
        if obj == "plain" or (isinstance(obj, dict) and "plain" in obj):
            return PenaltySpec.plain()
        if isinstance(obj, dict) and "weighted" in obj:
            return PenaltySpec.weighted(obj["weighted"], float(obj.get("c", 1e-6)))
        if isinstance(obj, dict) and "group" in obj:
            return PenaltySpec.group(obj["group"], d, obj.get("weights"))
    except (ValueError, TypeError) as exc:
        raise ProblemFormatError(f"penalty: {exc}") from None
    raise ProblemFormatError(f"penalty: unrecognised specification {obj!r}")


def problem_to_dict(problem: Problem, matrix_csv: str | None = None) -> dict:
    return {
        "matrix_csv": matrix_csv if matrix_csv is not None
        else [[float(v) for v in row] for row in problem.op.to_dense()],
        "g": [float(v) for v in problem.g],
        "mu": problem.mu,
        "penalty": penalty_to_json(problem.penalty),
    }


def problem_from_dict(obj: dict, base_dir: Path | None = None) -> Problem:
    if not isinstance(obj, dict):
        raise ProblemFormatError("problem file must contain a JSON object")
    for key in ("matrix_csv", "g", "mu"):
        if key not in obj:
            raise ProblemFormatError(f"missing field {key!r}")
    src = obj["matrix_csv"]
    if isinstance(src, str):
        path = Path(src)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            a = load_matrix_csv(path)
        except OSError as exc:
            raise ProblemFormatError(f"matrix_csv: {exc}") from None
    else:
        try:
            a = np.array(src, dtype=np.float64)
        except (ValueError, TypeError):
            raise ProblemFormatError("matrix_csv: inline rows must be a rectangular numeric array") from None
        if a.ndim != 2:
            raise ProblemFormatError("matrix_csv: inline rows must form a 2-D array")
    try:
        op = DenseMap(a)
        g = np.array(obj["g"], dtype=np.float64)
        mu = obj["mu"]
        if not isinstance(mu, (int, float)) or isinstance(mu, bool):
            raise ProblemFormatError("field 'mu' must be a number")
        penalty = penalty_from_json(obj.get("penalty", "plain"), op.domain_dim)
        return Problem(op, g, float(mu), penalty)
    except ProblemFormatError:
        raise
    except (ValueError, TypeError) as exc:
        raise ProblemFormatError(str(exc)) from None


def load_problem(path) -> Problem:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"{path}: malformed JSON ({exc})") from None
    return problem_from_dict(obj, path.parent)


def save_problem(problem: Problem, path, matrix_csv: str | None = None) -> None:
    """Write ``problem`` as JSON; with ``matrix_csv`` the matrix goes to that
    file (relative to ``path``) instead of inline rows."""
    path = Path(path)
    if matrix_csv is not None:
        save_matrix_csv(problem.op.to_dense(), path.parent / matrix_csv)
    path.write_text(json.dumps(problem_to_dict(problem, matrix_csv), indent=2) + "\n")


def save_report(report: SolveReport, path, include_trace: bool = True) -> None:
    report.to_json(path, include_trace)


def load_report(path) -> dict:
    return json.loads(Path(path).read_text())
