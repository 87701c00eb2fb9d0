"""Cost functions: residual, penalty, sqrt-Lasso cost, joint cost and surrogate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operator import DenseMap, DimensionError, LinearMap
from .prox import PenaltySpec, _norm


@dataclass(frozen=True, eq=False)
class Problem:
    """Data ``(A, g)``, regularisation ``mu`` and penalty.

    ``mu = 0`` is accepted so that the unpenalised limit can be exercised;
    negative values are rejected.
    """

    op: LinearMap
    g: np.ndarray
    mu: float
    penalty: PenaltySpec = field(default_factory=PenaltySpec.plain)

    def __post_init__(self):
        op = self.op if isinstance(self.op, LinearMap) else DenseMap(self.op)
        g = np.array(self.g, dtype=np.float64).ravel()
        if g.shape[0] != op.codomain_dim:
            raise DimensionError(f"g has length {g.shape[0]}, operator codomain is {op.codomain_dim}")
        mu = float(self.mu)
        if not mu >= 0 or not np.isfinite(mu):
            raise ValueError(f"mu must be a finite nonnegative number, got {self.mu}")
        self.penalty.check_dim(op.domain_dim)
        g.setflags(write=False)
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "mu", mu)

    @property
    def dim(self) -> int:
        return self.op.domain_dim

    def with_mu(self, mu: float) -> "Problem":
        return Problem(self.op, self.g, mu, self.penalty)

    def with_penalty(self, penalty: PenaltySpec) -> "Problem":
        return Problem(self.op, self.g, self.mu, penalty)


def _check_f(problem: Problem, f) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1 or f.shape[0] != problem.dim:
        raise DimensionError(f"expected f of length {problem.dim}, got shape {f.shape}")
    return f


def residual_norm(problem: Problem, f) -> float:
    """``||Af - g||``."""
    f = _check_f(problem, f)
    return _norm(problem.op.apply(f) - problem.g)


def penalty_value(problem: Problem, f) -> float:
    return problem.penalty.value(_check_f(problem, f))


def cost(problem: Problem, f) -> float:
    """Square-root Lasso cost ``||Af - g|| + mu * penalty(f)``."""
    return residual_norm(problem, f) + problem.mu * penalty_value(problem, f)


def lasso_cost(problem: Problem, f, tilde_mu: float) -> float:
    """Lasso cost ``||Af - g||^2 + tilde_mu * penalty(f)``."""
    return residual_norm(problem, f) ** 2 + tilde_mu * penalty_value(problem, f)


def joint_cost(problem: Problem, f, sigma: float) -> float:
    """Jointly convex cost ``||Af-g||^2 / sigma + sigma + 2 mu penalty(f)``.

    Minimising over ``sigma > 0`` gives ``sigma = ||Af - g||`` and twice the
    square-root Lasso cost.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = residual_norm(problem, f)
    return r * r / sigma + sigma + 2.0 * problem.mu * penalty_value(problem, f)


def surrogate_cost(problem: Problem, f, sigma: float, anchor, tau: float) -> float:
    """Majorising surrogate of ``joint_cost(., sigma)`` anchored at ``anchor``.

    Majorises the joint cost whenever ``tau * ||A||^2 <= 1`` and equals it
    at ``f = anchor``.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    f = _check_f(problem, f)
    diff = f - _check_f(problem, anchor)
    ad = problem.op.apply(diff)
    gap = float(np.sum(diff * diff)) / tau - float(np.sum(ad * ad))
    return joint_cost(problem, f, sigma) + gap / sigma
