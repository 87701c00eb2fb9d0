"""Linear operators with forward/adjoint application and norm estimation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DimensionError(ValueError):
    """Raised when a vector does not match an operator's dimensions."""


def _as_vector(x, n: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != n:
        raise DimensionError(f"{what}: expected a vector of length {n}, got shape {x.shape}")
    return x


class LinearMap:
    """Base class for a real linear map ``A: R^d -> R^m``.

    Subclasses implement ``_apply`` and ``_apply_adjoint``; the public
    methods only validate shapes. Instances are treated as immutable.
    """

    domain_dim: int
    codomain_dim: int

    def apply(self, x) -> np.ndarray:
        return self._apply(_as_vector(x, self.domain_dim, "apply"))

    def apply_adjoint(self, y) -> np.ndarray:
        return self._apply_adjoint(_as_vector(y, self.codomain_dim, "apply_adjoint"))

    def __matmul__(self, x):
        return self.apply(x)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.codomain_dim, self.domain_dim)

    @property
    def T(self) -> "_Adjoint":
        return _Adjoint(self)

    def to_dense(self) -> np.ndarray:
        """Materialise the operator column by column."""
        eye = np.eye(self.domain_dim)
        return np.column_stack([self._apply(eye[:, j]) for j in range(self.domain_dim)]).reshape(
            self.codomain_dim, self.domain_dim
        )

    def _apply(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def _apply_adjoint(self, y: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError


class _Adjoint:
    def __init__(self, op: LinearMap):
        self._op = op

    def __matmul__(self, y):
        return self._op.apply_adjoint(y)


class DenseMap(LinearMap):
    """Operator backed by an explicit ``m x d`` matrix."""

    def __init__(self, matrix):
        a = np.array(matrix, dtype=np.float64)
        if a.ndim == 1:
            a = a.reshape(1, -1)
        if a.ndim != 2 or a.size == 0:
            raise DimensionError(f"matrix must be a nonempty 2-D array, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix contains non-finite entries")
        a.setflags(write=False)
        self.matrix = a
        self.codomain_dim, self.domain_dim = a.shape

    def _apply(self, x):
        return self.matrix @ x

    def _apply_adjoint(self, y):
        return self.matrix.T @ y

    def to_dense(self) -> np.ndarray:
        return self.matrix.copy()

    def __repr__(self):
        return f"DenseMap(shape={self.shape})"


class CircularConvolution(LinearMap):
    """Circular convolution ``(Ax)_i = sum_j k_j x_{(i - j) mod d}``.

    Parameters
    ----------
    taps : dict[int, float] or array_like
        Either a mapping from offset to weight, or a length-``d`` kernel
        indexed by offset (index ``d - 1`` is offset ``-1``).
    size : int
        Signal length ``d`` (``m = d``).

    The adjoint is the matching circular correlation. Application is done
    by summing shifted copies, so a delta kernel reproduces the input
    exactly.
    """

    def __init__(self, taps, size: int):
        if size < 1:
            raise DimensionError("size must be positive")
        if isinstance(taps, dict):
            items = {int(k) % size: 0.0 for k in taps}
            for k, v in taps.items():
                items[int(k) % size] += float(v)
        else:
            kern = _as_vector(taps, size, "kernel")
            items = {int(j): float(kern[j]) for j in np.flatnonzero(kern)}
        self.taps = tuple(sorted((k, v) for k, v in items.items() if v != 0.0))
        self.domain_dim = self.codomain_dim = size

    @property
    def kernel(self) -> np.ndarray:
        k = np.zeros(self.domain_dim)
        for off, w in self.taps:
            k[off] = w
        return k

    def _apply(self, x):
        out = np.zeros_like(x)
        for off, w in self.taps:
            out += w * np.roll(x, off)
        return out

    def _apply_adjoint(self, y):
        out = np.zeros_like(y)
        for off, w in self.taps:
            out += w * np.roll(y, -off)
        return out

    def gram_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of ``A^T A``, i.e. ``|DFT(kernel)|^2``."""
        return np.abs(np.fft.fft(self.kernel)) ** 2

    def __repr__(self):
        return f"CircularConvolution(size={self.domain_dim}, taps={len(self.taps)})"


@dataclass(frozen=True)
class NormEstimate:
    value: float
    iterations_used: int
    converged: bool
    rel_tol: float = 0.0

    @property
    def inflated(self) -> float:
        """Upper-bound proxy ``(1 + 5 rel_tol) * value`` for the true norm."""
        return (1.0 + 5.0 * self.rel_tol) * self.value


def estimate_spectral_norm(op: LinearMap, rel_tol: float = 1e-10, max_iter: int = 10_000,
                           seed: int = 0) -> NormEstimate:
    """Estimate ``||A||`` by power iteration on ``A^T A``.

    Stops when two successive Rayleigh quotients differ by less than
    ``rel_tol`` relatively. The returned value is the square root of the
    largest Rayleigh quotient seen, so it never exceeds ``||A||``.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.domain_dim)
    x /= np.linalg.norm(x)
    best = 0.0
    prev = None
    for it in range(1, max_iter + 1):
        y = op.apply_adjoint(op.apply(x))
        rq = float(x @ y)
        best = max(best, rq)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return NormEstimate(0.0, it, True, rel_tol)
        if prev is not None and abs(rq - prev) <= rel_tol * abs(rq):
            return NormEstimate(float(np.sqrt(best)), it, True, rel_tol)
        prev = rq
        x = y / ny
    return NormEstimate(float(np.sqrt(best)), max_iter, False, rel_tol)


def default_stepsize(norm_estimate: NormEstimate | float, safety: float = 0.98) -> float:
    """Stepsize ``tau = safety / ||A||^2``.

    ``safety`` lies in ``(0, 2)``; values at or below 1 keep the
    sublinear rate guarantee valid.
    """
    if not 0.0 < safety < 2.0:
        raise ValueError(f"safety must lie in (0, 2), got {safety}")
    value = norm_estimate.value if isinstance(norm_estimate, NormEstimate) else float(norm_estimate)
    if not value > 0.0:
        raise ValueError("zero operator: no finite stepsize")
    return safety / value**2


def load_matrix_csv(path) -> np.ndarray:
    """Read a header-free, comma-separated, row-major matrix."""
    rows = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: empty matrix")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DimensionError(f"{path}: ragged rows (widths {sorted(widths)})")
    return np.array(rows, dtype=np.float64)


def save_matrix_csv(matrix, path) -> None:
    a = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        for row in a:
            w.writerow([repr(float(v)) for v in row])


def cached_norm_estimate(op: LinearMap, rel_tol: float = 1e-10, max_iter: int = 10_000,
                         seed: int = 0) -> NormEstimate:
    """``estimate_spectral_norm`` memoised on the operator instance."""
    cache = op.__dict__.setdefault("_norm_cache", {})
    key = (rel_tol, max_iter, seed)
    if key not in cache:
        cache[key] = estimate_spectral_norm(op, rel_tol, max_iter, seed)
    return cache[key]
