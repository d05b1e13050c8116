"""Per-class batch statistics and the two-sample Hotelling T^2 statistic."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateClass, DimensionMismatch, EmptyClass
from .numerics import ridge_inverse

RIDGE_SCALE = 1e-3
RIDGE_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class ClassBatch:
    """Samples of one class inside a mini-batch, stored as an (n_k, p) array."""

    class_id: int
    features: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim == 1:
            f = f.reshape(-1, 1) if f.size else f.reshape(0, 0)
        if f.ndim != 2:
            raise DimensionMismatch(f"features must be 2-D, got shape {f.shape}")
        object.__setattr__(self, "features", f)

    @property
    def count(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class BatchStats:
    class_id: int
    mean: np.ndarray
    scatter: np.ndarray
    count: int


def class_mean(batch: ClassBatch) -> np.ndarray:
    if batch.count < 1:
        raise EmptyClass(f"class {batch.class_id} has no samples")
    return batch.features.mean(axis=0)


def scatter_matrix(batch: ClassBatch, mean) -> np.ndarray:
    """Sum of outer products of deviations from ``mean``."""
    if batch.count < 1:
        raise EmptyClass(f"class {batch.class_id} has no samples")
    mean = np.asarray(mean, dtype=np.float64)
    if mean.shape != (batch.dim,):
        raise DimensionMismatch(f"mean of shape {mean.shape} for features of dim {batch.dim}")
    dev = batch.features - mean
    s = dev.T @ dev
    return 0.5 * (s + s.T)


def batch_stats(batch: ClassBatch) -> BatchStats:
    mean = class_mean(batch)
    return BatchStats(batch.class_id, mean, scatter_matrix(batch, mean), batch.count)


def covariance_unbiased(batch: ClassBatch) -> np.ndarray:
    if batch.count < 2:
        raise DegenerateClass(f"class {batch.class_id} has {batch.count} sample(s), need 2")
    return scatter_matrix(batch, class_mean(batch)) / (batch.count - 1)


def _require_two(stats: BatchStats):
    if stats.count < 2:
        raise DegenerateClass(f"class {stats.class_id} has {stats.count} sample(s), need 2")


def pooled_trace_estimate(stats: list[BatchStats]) -> float:
    """Average over classes of trace(S_k) / (n_k - 1)."""
    if not stats:
        raise DegenerateClass("no classes given")
    total = 0.0
    for s in stats:
        _require_two(s)
        total += float(np.trace(s.scatter)) / (s.count - 1)
    return total / len(stats)


def default_ridge(pooled_scatter: np.ndarray) -> float:
    """Scale-aware ridge: 1e-3 * trace / p, floored at 1e-8."""
    p = pooled_scatter.shape[0]
    return max(RIDGE_SCALE * float(np.trace(pooled_scatter)) / p, RIDGE_FLOOR)


def t2_coefficient(n_k: int, n_t: int) -> float:
    return (n_k + n_t - 2) / (1.0 / n_k + 1.0 / n_t)


@dataclass(frozen=True, eq=False)
class PairTerms:
    """Intermediate quantities for one class pair, reused by the gradients."""

    t2: float
    coef: float
    gamma: np.ndarray
    inverse: np.ndarray
    eps: float
    auto_eps: bool

    @property
    def w(self) -> np.ndarray:
        return self.inverse @ self.gamma


def pair_terms(stats_k: BatchStats, stats_t: BatchStats, eps: float | None = None) -> PairTerms:
    _require_two(stats_k)
    _require_two(stats_t)
    if stats_k.mean.shape != stats_t.mean.shape:
        raise DimensionMismatch(
            f"feature dims differ: {stats_k.mean.shape[0]} vs {stats_t.mean.shape[0]}"
        )
    pooled = stats_k.scatter + stats_t.scatter
    auto = eps is None
    if auto:
        eps = default_ridge(pooled)
    inv = ridge_inverse(pooled, eps)
    gamma = stats_k.mean - stats_t.mean
    coef = t2_coefficient(stats_k.count, stats_t.count)
    t2 = coef * float(gamma @ inv @ gamma)
    return PairTerms(max(t2, 0.0), coef, gamma, inv, float(eps), auto)


def hotelling_t2(stats_k: BatchStats, stats_t: BatchStats, eps: float | None = None) -> float:
    """Two-sample T^2 with pooled scatter (S_k + S_t + eps*I).

    ``eps=None`` selects the scale-aware default ridge.
    """
    return pair_terms(stats_k, stats_t, eps).t2
