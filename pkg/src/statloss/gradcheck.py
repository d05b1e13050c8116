"""Randomized gradient checks: exact mode against finite differences, paper mode against exact."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .class_stats import ClassBatch
from .stat_loss import (
    LossConfig,
    _prepare,
    finite_difference_grads,
    grad_l0_exact,
    grad_l0_paper,
    grad_ldiv_exact,
    grad_ldiv_paper,
    loss_total,
    loss_value,
    shift_batches,
)

REL_FLOOR = 1e-8


def random_batches(rng: np.random.Generator, max_dim=8, max_classes=4, min_count=2, max_count=10,
                   full_rank=False, mean_scale=1.0) -> list[ClassBatch]:
    """Gaussian classes with N(0, mean_scale^2 I) means and unit within-class noise.

    ``full_rank`` redraws until every pair satisfies n_k + n_t - 2 >= p, so the
    pooled scatter is nonsingular without a ridge.
    """
    while True:
        p = int(rng.integers(1, max_dim + 1))
        num = int(rng.integers(2, max_classes + 1))
        counts = rng.integers(min_count, max_count + 1, size=num)
        if not full_rank or np.sort(counts)[:2].sum() - 2 >= p:
            break
    return [ClassBatch(k, rng.normal(0.0, mean_scale, p) + rng.standard_normal((int(n), p)))
            for k, n in enumerate(counts)]


def max_relative_error(a: list[np.ndarray], b: list[np.ndarray]) -> float:
    """Max over entries of |a - b| / max(|a|, |b|, 1e-8)."""
    worst = 0.0
    for x, y in zip(a, b):
        if x.size:
            den = np.maximum(np.maximum(np.abs(x), np.abs(y)), REL_FLOOR)
            worst = max(worst, float(np.max(np.abs(x - y) / den)))
    return worst


def _flat(gs):
    return np.concatenate([g.ravel() for g in gs]) if gs else np.zeros(0)


def angle_and_ratio(paper: list[np.ndarray], exact: list[np.ndarray]) -> tuple[float, float]:
    """Angle in degrees between the stacked gradients and |paper| / |exact|."""
    a, b = _flat(paper), _flat(exact)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return float("nan"), float("nan")
    cos = np.clip(a @ b / (na * nb), -1.0, 1.0)
    return float(np.degrees(np.arccos(cos))), float(na / nb)


@dataclass
class GradcheckReport:
    batches: int
    exact_max_rel_err: float
    l0_angle_deg: list[float] = field(default_factory=list)
    l0_ratio: list[float] = field(default_factory=list)  # one entry per class
    l0_ratio_expected: list[float] = field(default_factory=list)  # (n_k - 1) / n_k
    ldiv_angle_deg: list[float] = field(default_factory=list)
    ldiv_ratio: list[float] = field(default_factory=list)
    ldiv_pairs_checked: int = 0

    def passed(self, tol: float = 1e-4) -> bool:
        return self.exact_max_rel_err <= tol

    @property
    def l0_ratio_gap(self) -> float:
        return max((abs(r - e) for r, e in zip(self.l0_ratio, self.l0_ratio_expected)), default=0.0)


def run_gradcheck(num_batches: int, seed: int, lam: float = 1.0, delta: float = 10.0,
                  ridge_eps: float | None = None, hinge: bool = False, **batch_kw) -> GradcheckReport:
    """Exact-mode total gradient vs. central differences of loss_total on random batches."""
    rng = np.random.default_rng(seed)
    cfg = LossConfig(lam=lam, delta=delta, ridge_eps=ridge_eps, grad_mode="exact", hinge=hinge)
    rep = GradcheckReport(num_batches, 0.0)
    for _ in range(num_batches):
        batches = random_batches(rng, **batch_kw)
        exact = loss_total(batches, cfg).grads
        fd = finite_difference_grads(lambda bs: loss_value(bs, cfg), batches)
        rep.exact_max_rel_err = max(rep.exact_max_rel_err, max_relative_error(exact, fd))

        _, used, stats = _prepare(batches)
        g0p, g0e = grad_l0_paper(used, stats), grad_l0_exact(used, stats)
        for gp, ge, s in zip(g0p, g0e, stats):
            ang, ratio = angle_and_ratio([gp], [ge])
            rep.l0_angle_deg.append(ang)
            rep.l0_ratio.append(ratio)
            rep.l0_ratio_expected.append((s.count - 1) / s.count)
        if lam > 0 and len(stats) >= 2:
            gdp, gde = grad_ldiv_paper(used, stats, cfg), grad_ldiv_exact(used, stats, cfg)
            ang, ratio = angle_and_ratio(gdp, gde)
            rep.ldiv_angle_deg.append(ang)
            rep.ldiv_ratio.append(ratio)
            rep.ldiv_pairs_checked += len(stats) * (len(stats) - 1)
    return rep


def descent_rate(grad_mode: str, num_batches: int, seed: int, step: float = 1e-4,
                 cfg: LossConfig | None = None, normalize: bool = True, **batch_kw) -> float:
    """Fraction of random batches on which a step along -grad does not increase loss_total.

    With ``normalize`` the step has length ``step`` along -grad/|grad|, so the
    probe tests the direction only; otherwise the raw gradient is scaled by ``step``.
    """
    cfg = cfg or LossConfig()
    cfg = LossConfig(cfg.lam, cfg.delta, cfg.ridge_eps, grad_mode, cfg.hinge)
    rng = np.random.default_rng(seed)
    ok = 0
    for _ in range(num_batches):
        batches = random_batches(rng, **batch_kw)
        rep = loss_total(batches, cfg)
        grads = rep.grads
        if normalize:
            norm = np.linalg.norm(_flat(grads))
            grads = [g / norm for g in grads] if norm > 0 else grads
        ok += loss_value(shift_batches(batches, grads, step), cfg) <= rep.total
    return ok / num_batches


def param_finite_difference(net, batch, beta: float, cfg: LossConfig, step: float = 1e-5) -> list[np.ndarray]:
    """Central differences of joint_loss with respect to every network parameter."""
    from .model import joint_loss

    out = []
    for p in net.params():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            h = step * max(1.0, abs(orig))
            p[idx] = orig + h
            up = joint_loss(net, batch, beta, cfg)
            p[idx] = orig - h
            down = joint_loss(net, batch, beta, cfg)
            p[idx] = orig
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out
