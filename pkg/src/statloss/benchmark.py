"""Synthetic separation benchmark: joint loss (beta=1) against softmax only (beta=0)."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .class_stats import ClassBatch, batch_stats, hotelling_t2, pooled_trace_estimate
from .data import Dataset, benchmark_specs, stratified_split, synth_gaussians
from .evaluation import confusion, is_significant, mcnemar, metrics
from .model import NetworkState, TrainConfig, embed, fit, predict
from .stat_loss import LossConfig

TRAIN_PER_CLASS = 200
DATA_SEED_OFFSET = 1000


def embedding_stats(net: NetworkState, dataset: Dataset) -> tuple[float, float]:
    """Intra-class trace and mean pairwise T^2 of the embedded dataset."""
    z = embed(net, dataset.features)
    stats = [batch_stats(ClassBatch(c, z[dataset.labels == c])) for c in range(dataset.num_classes)
             if np.count_nonzero(dataset.labels == c) >= 2]
    t2 = [hotelling_t2(stats[a], stats[b]) for a in range(len(stats)) for b in range(a + 1, len(stats))]
    return pooled_trace_estimate(stats), float(np.mean(t2)) if t2 else float("nan")


@dataclass
class RunSummary:
    oa: float
    kappa: float
    trace: float
    mean_t2: float
    correct: np.ndarray


def evaluate_run(net: NetworkState, test: Dataset) -> RunSummary:
    pred = predict(net, test.features)
    m = metrics(confusion(test.labels, pred, test.num_classes))
    trace, t2 = embedding_stats(net, test)
    return RunSummary(m.oa, m.kappa, trace, t2, pred == test.labels)


def benchmark_config(seed: int = 0, beta: float = 1.0) -> TrainConfig:
    """Settings used by the separation benchmark; see README for the rationale."""
    return TrainConfig(beta=beta, lr=0.003, iterations=2000, batch_size=84, seed=seed,
                       loss_cfg=LossConfig(lam=0.01, delta=10.0, grad_mode="exact"),
                       hidden_dims=(32, 16), init_std=0.01)


@dataclass
class BenchmarkResult:
    stat: list[RunSummary] = field(default_factory=list)
    soft: list[RunSummary] = field(default_factory=list)
    f: list[float] = field(default_factory=list)
    seconds: float = 0.0

    def mean(self, runs: list[RunSummary], attr: str) -> float:
        return float(np.mean([getattr(r, attr) for r in runs]))

    @property
    def oa_not_worse(self) -> bool:
        return self.mean(self.stat, "oa") >= self.mean(self.soft, "oa")

    @property
    def trace_reduction(self) -> float:
        """Relative drop of the stat-model trace against softmax (positive is lower)."""
        base = self.mean(self.soft, "trace")
        return (base - self.mean(self.stat, "trace")) / base

    @property
    def t2_higher(self) -> bool:
        return self.mean(self.stat, "mean_t2") > self.mean(self.soft, "mean_t2")

    @property
    def significant_seeds(self) -> int:
        return sum(is_significant(f) for f in self.f)


def run_benchmark(seeds=range(5), stat_cfg=None, train_per_class: int = TRAIN_PER_CLASS,
                  log=None) -> BenchmarkResult:
    """Train both models on each seed's benchmark draw and compare them on held-out data.

    ``stat_cfg(seed)`` may override the beta=1 configuration; the baseline is
    always the same configuration with beta=0.
    """
    stat_cfg = stat_cfg or benchmark_config
    out = BenchmarkResult()
    t0 = time.perf_counter()
    for seed in seeds:
        data = synth_gaussians(benchmark_specs(), seed=DATA_SEED_OFFSET + seed)
        train, test = stratified_split(data, train_per_class, seed)
        cfg = stat_cfg(seed)
        stat = evaluate_run(fit(train, cfg)[0], test)
        soft = evaluate_run(fit(train, replace(cfg, beta=0.0))[0], test)
        out.stat.append(stat)
        out.soft.append(soft)
        out.f.append(mcnemar(stat.correct, soft.correct))
        if log:
            log(f"seed {seed}: oa {stat.oa:.3f}/{soft.oa:.3f} trace {stat.trace:.4g}/{soft.trace:.4g} "
                f"t2 {stat.mean_t2:.1f}/{soft.mean_t2:.1f} F {out.f[-1]:.2f}")
    out.seconds = time.perf_counter() - t0
    return out
