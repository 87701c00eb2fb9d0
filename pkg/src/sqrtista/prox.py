"""Thresholding operators and subdifferential distances for l1-type penalties.

Thresholds follow the convention ``S_t(x) = argmin_v (v - x)^2 + t |v|``,
so the shrinkage amount is ``t / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .objective import Problem


def _norm(v: np.ndarray) -> float:
    # pairwise summation; reproducible across call sites
    return float(np.sqrt(np.sum(v * v)))


def soft_threshold(x, t: float) -> np.ndarray:
    """Componentwise soft-thresholding with dead zone ``|x| < t/2``.

    >>> soft_threshold([-3.0, 1.0, 0.0], 2.0)
    array([-2.,  0.,  0.])
    """
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    x = np.asarray(x, dtype=np.float64)
    half = 0.5 * t
    out = np.zeros_like(x)
    hi = x >= half
    lo = x <= -half
    out[hi] = x[hi] - half
    out[lo] = x[lo] + half
    # |x| == t/2 lands in both masks only when t == 0 and x == 0; result is 0 either way
    return out


def soft_threshold_weighted(x, t: float, w) -> np.ndarray:
    """Soft-thresholding of component ``i`` at threshold ``t * w[i]``."""
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != x.shape:
        raise ValueError(f"weights shape {w.shape} does not match x shape {x.shape}")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    half = 0.5 * t * w
    out = np.zeros_like(x)
    hi = x >= half
    lo = x <= -half
    out[hi] = x[hi] - half[hi]
    out[lo] = x[lo] + half[lo]
    return out


@dataclass(frozen=True)
class GroupPartition:
    """Disjoint, nonempty index groups covering ``{0, ..., d-1}``."""

    groups: tuple[tuple[int, ...], ...]
    labels: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def from_groups(cls, groups: Sequence[Sequence[int]], d: int | None = None) -> "GroupPartition":
        gs = tuple(tuple(int(i) for i in g) for g in groups)
        if not gs:
            raise ValueError("partition has no groups")
        seen: dict[int, int] = {}
        for j, g in enumerate(gs):
            if not g:
                raise ValueError(f"group {j} is empty")
            for i in g:
                if i < 0:
                    raise ValueError(f"group {j} has negative index {i}")
                if i in seen:
                    raise ValueError(f"index {i} overlaps groups {seen[i]} and {j}")
                seen[i] = j
        n = max(seen) + 1
        if d is None:
            d = n
        missing = sorted(set(range(d)) - set(seen))
        if missing or n > d:
            raise ValueError(
                f"partition does not cover 0..{d - 1} exactly "
                f"(missing {missing[:5]}, max index {n - 1})"
            )
        labels = np.empty(d, dtype=np.intp)
        for i, j in seen.items():
            labels[i] = j
        labels.setflags(write=False)
        return cls(gs, labels)

    @classmethod
    def singletons(cls, d: int) -> "GroupPartition":
        return cls.from_groups([[i] for i in range(d)], d)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def dim(self) -> int:
        return self.labels.shape[0]

    def group_norms(self, x: np.ndarray) -> np.ndarray:
        # scaled by the group's largest entry: no underflow, and a singleton
        # group gives |x_i| * sqrt(1) == |x_i| exactly
        ax = np.abs(x)
        scale = np.zeros(self.n_groups)
        np.maximum.at(scale, self.labels, ax)
        safe = np.where(scale > 0.0, scale, 1.0)
        y = ax / safe[self.labels]
        return scale * np.sqrt(np.bincount(self.labels, weights=y * y, minlength=self.n_groups))

    def check_dim(self, d: int) -> None:
        if self.dim != d:
            raise ValueError(f"partition covers {self.dim} indices, vector has {d}")


def block_soft_threshold(x, t: float, partition: GroupPartition, group_weights=None) -> np.ndarray:
    """Radial shrink of every group's Euclidean norm by ``t/2`` (times its weight).

    A group whose norm is at most the shrink amount maps to zero, including
    the all-zero group.
    """
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    x = np.asarray(x, dtype=np.float64)
    partition.check_dim(x.shape[0])
    norms = partition.group_norms(x)
    half = 0.5 * t
    if group_weights is not None:
        half = half * np.asarray(group_weights, dtype=np.float64)
    keep = np.maximum(norms - half, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = x / norms[partition.labels]
        out = unit * keep[partition.labels]
    out[keep[partition.labels] == 0.0] = 0.0
    return out


@dataclass(frozen=True)
class PenaltySpec:
    """Which l1-type penalty a problem uses.

    ``kind`` is ``"plain"`` (sum |f_i|), ``"weighted"`` (sum w_i |f_i|,
    with every ``w_i >= lower_bound > 0``) or ``"group"`` (sum over groups
    of ``w_j ||f^(j)||``; ``w_j`` defaults to 1).
    """

    kind: str = "plain"
    weights: np.ndarray | None = field(default=None, compare=False)
    partition: GroupPartition | None = None
    lower_bound: float = 1e-6

    def __post_init__(self):
        if self.kind not in ("plain", "weighted", "group"):
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.kind == "weighted":
            if self.weights is None:
                raise ValueError("weighted penalty requires weights")
            if not self.lower_bound > 0:
                raise ValueError("weight lower bound must be positive")
            if np.any(self.weights < self.lower_bound):
                bad = int(np.argmin(self.weights))
                raise ValueError(
                    f"weight {bad} = {self.weights[bad]} is below the lower bound {self.lower_bound}"
                )
        if self.kind == "group":
            if self.partition is None:
                raise ValueError("group penalty requires a partition")
            if self.weights is not None:
                if self.weights.shape != (self.partition.n_groups,):
                    raise ValueError("group weights must have one entry per group")
                if np.any(self.weights <= 0):
                    raise ValueError("group weights must be strictly positive")

    @classmethod
    def plain(cls) -> "PenaltySpec":
        return cls("plain")

    @classmethod
    def weighted(cls, weights, lower_bound: float = 1e-6) -> "PenaltySpec":
        w = np.array(weights, dtype=np.float64).ravel()
        w.setflags(write=False)
        return cls("weighted", weights=w, lower_bound=lower_bound)

    @classmethod
    def group(cls, groups, d: int | None = None, weights=None) -> "PenaltySpec":
        part = groups if isinstance(groups, GroupPartition) else GroupPartition.from_groups(groups, d)
        w = None
        if weights is not None:
            w = np.array(weights, dtype=np.float64).ravel()
            w.setflags(write=False)
        return cls("group", weights=w, partition=part)

    def __eq__(self, other):
        if not isinstance(other, PenaltySpec):
            return NotImplemented
        if (self.kind, self.partition, self.lower_bound) != (other.kind, other.partition, other.lower_bound):
            return False
        if (self.weights is None) != (other.weights is None):
            return False
        return self.weights is None or np.array_equal(self.weights, other.weights)

    __hash__ = None

    def check_dim(self, d: int) -> None:
        if self.kind == "weighted" and self.weights.shape[0] != d:
            raise ValueError(f"{self.weights.shape[0]} weights for dimension {d}")
        if self.kind == "group":
            self.partition.check_dim(d)

    def value(self, f: np.ndarray) -> float:
        if self.kind == "plain":
            return float(np.sum(np.abs(f)))
        if self.kind == "weighted":
            return float(np.sum(self.weights * np.abs(f)))
        norms = self.partition.group_norms(f)
        if self.weights is not None:
            norms = self.weights * norms
        return float(np.sum(norms))

    def prox(self, x: np.ndarray, t: float) -> np.ndarray:
        """``argmin_v ||v - x||^2 + t * penalty(v)``."""
        if self.kind == "plain":
            return soft_threshold(x, t)
        if self.kind == "weighted":
            return soft_threshold_weighted(x, t, self.weights)
        return block_soft_threshold(x, t, self.partition, self.weights)

    def shift_factor(self, d: int) -> float:
        """Constant ``c`` with ``||prox(x, t) - x|| <= c t / 2`` for all ``x``.

        ``sqrt(d)`` for the plain penalty, ``sqrt(J)`` for ``J`` unweighted
        groups, and the Euclidean norm of the weights otherwise.
        """
        if self.kind == "plain":
            return float(np.sqrt(d))
        if self.weights is None:
            return float(np.sqrt(self.partition.n_groups))
        return _norm(self.weights)

    def subgradient_distance(self, f: np.ndarray, u: np.ndarray, mu: float) -> float:
        """Distance from 0 to ``u + mu * d(penalty)(f)``."""
        if self.kind == "group":
            part = self.partition
            fn = part.group_norms(f)
            un = part.group_norms(u)
            w = np.full(part.n_groups, mu) if self.weights is None else mu * self.weights
            active = fn > 0.0
            with np.errstate(invalid="ignore", divide="ignore"):
                unit = np.where(active[part.labels], f / fn[part.labels], 0.0)
            # unit is exactly +-1 on singleton groups, matching the plain branch bit for bit
            sn = part.group_norms(u + w[part.labels] * unit)
            contrib = np.where(active, sn, np.maximum(0.0, un - w))
            return _norm(contrib)
        w = mu if self.kind == "plain" else mu * self.weights
        active = f != 0.0
        contrib = np.where(active, np.abs(u + w * np.sign(f)), np.maximum(0.0, np.abs(u) - w))
        return _norm(contrib)


def kkt_distance(f, problem: "Problem", sigma: float) -> float:
    """Exact distance from 0 to the subdifferential of the sqrt-Lasso cost at ``f``.

    The residual term is differentiable only away from zero residual, so
    ``sigma`` (which must equal ``||Af - g||``) has to be positive.
    """
    if not sigma > 0:
        raise ValueError("kkt_distance is undefined at zero residual (sigma must be > 0)")
    f = np.asarray(f, dtype=np.float64)
    r = problem.op.apply(f) - problem.g
    u = problem.op.apply_adjoint(r) / sigma
    return problem.penalty.subgradient_distance(f, u, problem.mu)


def lasso_kkt_distance(f, problem: "Problem", tilde_mu: float) -> float:
    """Distance from 0 to the subdifferential of ``||Af-g||^2 + tilde_mu * penalty``."""
    f = np.asarray(f, dtype=np.float64)
    r = problem.op.apply(f) - problem.g
    u = 2.0 * problem.op.apply_adjoint(r)
    return problem.penalty.subgradient_distance(f, u, tilde_mu)
