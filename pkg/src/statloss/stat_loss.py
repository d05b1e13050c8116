"""The statistical loss L = L0 + lambda * L_div and its per-sample gradients.

``grad_mode="paper"`` follows the published closed forms: the L0 gradient
uses a 1/n_k factor, and the L_div gradient keeps the (n_k - 1)/n_k factors
and raw (uncentered) features of the published derivation.
``grad_mode="exact"`` is the true gradient of the implemented forward pass,
including the dependence of the class mean and of the automatic ridge on
every sample. ``finite_difference_grads`` is an independent oracle for it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .class_stats import (
    RIDGE_FLOOR,
    RIDGE_SCALE,
    BatchStats,
    ClassBatch,
    PairTerms,
    batch_stats,
    pair_terms,
    pooled_trace_estimate,
)
from .errors import ConfigError, DegenerateClass

GRAD_MODES = ("paper", "exact")


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.01
    delta: float = 10.0
    ridge_eps: float | None = None  # None selects the scale-aware default
    grad_mode: str = "paper"
    hinge: bool = False

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if not self.lam >= 0:
            raise ConfigError(f"lambda must be nonnegative, got {self.lam}")
        if self.ridge_eps is not None and not self.ridge_eps >= 0:
            raise ConfigError(f"ridge_eps must be nonnegative, got {self.ridge_eps}")
        if self.grad_mode not in GRAD_MODES:
            raise ConfigError(f"grad_mode must be one of {GRAD_MODES}, got {self.grad_mode!r}")


@dataclass
class LossReport:
    l0: float
    l_div: float
    total: float
    pair_t2: dict[tuple[int, int], float]
    grads: list[np.ndarray] | None
    lam: float
    warnings: list[str] = field(default_factory=list)


def _usable(batches: Sequence[ClassBatch]) -> list[int]:
    return [i for i, b in enumerate(batches) if b.count >= 2]


def _all_pairs(stats: list[BatchStats], cfg: LossConfig) -> dict[tuple[int, int], PairTerms]:
    # Ordered pairs in lexicographic position order; (t, k) reuses the
    # factorization of (k, t) with the sign of gamma flipped.
    out: dict[tuple[int, int], PairTerms] = {}
    for a in range(len(stats)):
        for b in range(a + 1, len(stats)):
            terms = pair_terms(stats[a], stats[b], cfg.ridge_eps)
            out[(a, b)] = terms
            out[(b, a)] = PairTerms(terms.t2, terms.coef, -terms.gamma, terms.inverse,
                                    terms.eps, terms.auto_eps)
    return dict(sorted(out.items()))


def loss_l0(stats: list[BatchStats]) -> float:
    """Average unbiased within-class trace."""
    return pooled_trace_estimate(stats)


def _pair_value(terms: PairTerms, cfg: LossConfig) -> float:
    v = cfg.delta - terms.t2
    return max(v, 0.0) if cfg.hinge else v


def _pair_active(terms: PairTerms, cfg: LossConfig) -> bool:
    return not cfg.hinge or cfg.delta - terms.t2 > 0


def loss_ldiv(stats: list[BatchStats], cfg: LossConfig,
              pairs: dict[tuple[int, int], PairTerms] | None = None) -> float:
    """Sum over ordered class pairs of (delta - T^2); 0 with fewer than two classes."""
    for s in stats:
        if s.count < 2:
            raise DegenerateClass(f"class {s.class_id} has {s.count} sample(s), need 2")
    if len(stats) < 2:
        return 0.0
    if pairs is None:
        pairs = _all_pairs(stats, cfg)
    return float(sum(_pair_value(terms, cfg) for terms in pairs.values()))


def grad_l0_paper(batches: Sequence[ClassBatch], stats: list[BatchStats]) -> list[np.ndarray]:
    lam_count = len(stats)
    return [(2.0 / lam_count) * (b.features - s.mean) / s.count for b, s in zip(batches, stats)]


def grad_l0_exact(batches: Sequence[ClassBatch], stats: list[BatchStats]) -> list[np.ndarray]:
    lam_count = len(stats)
    out = []
    for b, s in zip(batches, stats):
        if s.count < 2:
            raise DegenerateClass(f"class {s.class_id} has {s.count} sample(s), need 2")
        out.append((2.0 / lam_count) * (b.features - s.mean) / (s.count - 1))
    return out


def grad_ldiv_paper(batches: Sequence[ClassBatch], stats: list[BatchStats], cfg: LossConfig,
                    pairs: dict[tuple[int, int], PairTerms] | None = None) -> list[np.ndarray]:
    """Published closed form, accumulated over ordered pairs (k, t) onto class k.

    The two matrix-valued terms of the published expression are contracted
    with the trailing Gamma of the product rule, which gives
    coef * [-(2/n_k) w + 2 (n_k-1)/n_k (w . z_i) w] with w = (S_k+S_t)^-1 Gamma.
    """
    grads = [np.zeros_like(b.features) for b in batches]
    if len(stats) < 2:
        return grads
    if pairs is None:
        pairs = _all_pairs(stats, cfg)
    for (k, _t), terms in pairs.items():
        if not _pair_active(terms, cfg):
            continue
        n_k = stats[k].count
        w = terms.w
        z = batches[k].features
        shrink = (n_k - 1) / n_k
        g = -(2.0 / n_k) * w + 2.0 * shrink * np.outer(z @ w, w)
        grads[k] += terms.coef * g
    return grads


def _ridge_slope(terms: PairTerms, stats_k: BatchStats, stats_t: BatchStats) -> float:
    """d eps / d trace(S_k + S_t) for the automatic ridge (0 when fixed or floored)."""
    if not terms.auto_eps:
        return 0.0
    p = stats_k.mean.shape[0]
    raw = RIDGE_SCALE * float(np.trace(stats_k.scatter + stats_t.scatter)) / p
    return RIDGE_SCALE / p if raw > RIDGE_FLOOR else 0.0


def grad_ldiv_exact(batches: Sequence[ClassBatch], stats: list[BatchStats], cfg: LossConfig,
                    pairs: dict[tuple[int, int], PairTerms] | None = None) -> list[np.ndarray]:
    """Full chain-rule gradient of loss_ldiv.

    With q = Gamma^T A^-1 Gamma, A = S_k + S_t + eps I and w = A^-1 Gamma,
    a sample z_i of class c in {k, t} with deviation d_i has
    dq/dz_i = (+-2/n_c) w - 2 (w . d_i) w - |w|^2 d(eps)/dz_i.
    """
    grads = [np.zeros_like(b.features) for b in batches]
    if len(stats) < 2:
        return grads
    if pairs is None:
        pairs = _all_pairs(stats, cfg)
    for (k, t), terms in pairs.items():
        if not _pair_active(terms, cfg):
            continue
        w = terms.w
        ww = float(w @ w)
        slope = _ridge_slope(terms, stats[k], stats[t])
        for c, sign in ((k, 1.0), (t, -1.0)):
            d = batches[c].features - stats[c].mean
            dq = sign * (2.0 / stats[c].count) * w - 2.0 * np.outer(d @ w, w)
            if slope:
                dq -= ww * slope * 2.0 * d
            grads[c] -= terms.coef * dq
    return grads


def _prepare(batches: Sequence[ClassBatch]):
    keep = _usable(batches)
    used = [batches[i] for i in keep]
    stats = [batch_stats(b) for b in used]
    return keep, used, stats


def loss_total(batches: Sequence[ClassBatch], cfg: LossConfig, with_grads: bool = True) -> LossReport:
    """Evaluate L0, L_div and (optionally) per-sample gradients.

    Classes with fewer than two samples are left out of every term and get
    zero gradient. The 1/Lambda prefactor counts only the classes kept.
    """
    keep, used, stats = _prepare(batches)
    warnings = []
    if len(keep) < len(batches):
        warnings.append(f"{len(batches) - len(keep)} class(es) with n_k < 2 excluded")
    if not stats:
        raise DegenerateClass("no class in the batch has two or more samples")
    pairs = _all_pairs(stats, cfg) if len(stats) >= 2 else {}
    if len(stats) < 2:
        warnings.append("single class: L_div is 0")
    l0 = loss_l0(stats)
    l_div = loss_ldiv(stats, cfg, pairs)
    pair_t2 = {(stats[a].class_id, stats[b].class_id): terms.t2 for (a, b), terms in pairs.items()}

    grads = None
    if with_grads:
        if cfg.grad_mode == "paper":
            g0 = grad_l0_paper(used, stats)
            gd = grad_ldiv_paper(used, stats, cfg, pairs)
        else:
            g0 = grad_l0_exact(used, stats)
            gd = grad_ldiv_exact(used, stats, cfg, pairs)
        grads = [np.zeros_like(b.features) for b in batches]
        for slot, a, b in zip(keep, g0, gd):
            grads[slot] = a + cfg.lam * b
    return LossReport(l0, l_div, l0 + cfg.lam * l_div, pair_t2, grads, cfg.lam, warnings)


def grad_total(batches: Sequence[ClassBatch], cfg: LossConfig) -> LossReport:
    return loss_total(batches, cfg, with_grads=True)


def loss_value(batches: Sequence[ClassBatch], cfg: LossConfig) -> float:
    return loss_total(batches, cfg, with_grads=False).total


def finite_difference_grads(fn: Callable[[list[ClassBatch]], float],
                            batches: Sequence[ClassBatch],
                            step: float = 1e-5) -> list[np.ndarray]:
    """Central differences of ``fn`` with per-coordinate step step*max(1, |z|)."""
    work = [b.features.copy() for b in batches]

    def evaluate():
        return fn([ClassBatch(b.class_id, f) for b, f in zip(batches, work)])

    grads = [np.zeros_like(f) for f in work]
    for f, g in zip(work, grads):
        for idx in np.ndindex(f.shape):
            orig = f[idx]
            h = step * max(1.0, abs(orig))
            f[idx] = orig + h
            up = evaluate()
            f[idx] = orig - h
            down = evaluate()
            f[idx] = orig
            g[idx] = (up - down) / (2.0 * h)
    return grads


def shift_batches(batches: Sequence[ClassBatch], grads: Sequence[np.ndarray], step: float):
    return [ClassBatch(b.class_id, b.features - step * g) for b, g in zip(batches, grads)]
