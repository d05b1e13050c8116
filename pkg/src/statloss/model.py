"""Feed-forward classifier with manual backprop, trained on softmax + beta * statistical loss.

The last hidden layer's rectified output is the embedding z on which the
statistical loss acts. The softmax head is updated by the cross-entropy
gradient alone; the statistical loss reaches the hidden layers through dL/dz.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .class_stats import ClassBatch
from .errors import CheckpointError, ConfigError, DegenerateBatch, DimensionMismatch, InvalidDims, InvalidLabel
from .stat_loss import LossConfig, loss_total

INIT_STD = 0.01
CHECKPOINT_FORMAT = "statloss-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(eq=False)
class NetworkState:
    """Weights are (out, in) matrices; the last pair is the softmax head."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int | None = None
    iteration: int = 0

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or len(self.weights) < 2:
            raise InvalidDims("need at least one hidden layer and a head, with one bias per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise InvalidDims(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise InvalidDims(f"layer {i} expects {w.shape[1]} inputs, previous gives {self.weights[i - 1].shape[0]}")

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def embed_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "NetworkState":
        return NetworkState([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                            self.seed, self.iteration)

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.params())


@dataclass(frozen=True)
class TrainConfig:
    beta: float = 1.0
    lr: float = 0.001
    iterations: int = 2000
    batch_size: int = 84
    seed: int = 0
    loss_cfg: LossConfig = field(default_factory=LossConfig)
    hidden_dims: tuple[int, ...] = (32, 16)
    init_std: float | str = INIT_STD  # a number, or "fan_in" for sqrt(2 / fan_in) per layer

    def __post_init__(self):
        if not self.lr >= 0:
            raise ConfigError(f"lr must be nonnegative, got {self.lr}")
        if not self.beta >= 0:
            raise ConfigError(f"beta must be nonnegative, got {self.beta}")
        if self.iterations < 0:
            raise ConfigError("iterations must be nonnegative")
        if not self.hidden_dims or any(d < 1 for d in self.hidden_dims):
            raise ConfigError(f"hidden_dims must be a non-empty list of positive sizes, got {self.hidden_dims}")


def init_network(dims: Sequence[int], seed: int | np.random.Generator,
                 std: float | str = INIT_STD) -> NetworkState:
    """Gaussian(0, std) weights and zero biases; ``dims`` = [input, hidden..., classes].

    ``std="fan_in"`` uses sqrt(2 / fan_in) for each layer instead of one constant.
    """
    dims = list(dims)
    if len(dims) < 3 or any(int(d) < 1 for d in dims):
        raise InvalidDims(f"dims must be [input, hidden..., classes] with all sizes >= 1, got {dims}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if std == "fan_in":
        stds = [np.sqrt(2.0 / dims[i]) for i in range(len(dims) - 1)]
    elif isinstance(std, str):
        raise ConfigError(f"unknown init_std {std!r}")
    else:
        stds = [float(std)] * (len(dims) - 1)
    weights = [rng.normal(0.0, stds[i], size=(dims[i + 1], dims[i])) for i in range(len(dims) - 1)]
    biases = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
    return NetworkState(weights, biases, seed=seed if isinstance(seed, int) else None)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_ce(logits, label: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of softmax(logits) against ``label`` and its logit gradient."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[-1]:
        raise InvalidLabel(f"label {label} outside [0, {logits.shape[-1]})")
    shifted = logits - np.max(logits)
    log_norm = np.log(np.sum(np.exp(shifted)))
    probs = np.exp(shifted - log_norm)
    dlogits = probs.copy()
    dlogits[label] -= 1.0
    return float(log_norm - shifted[label]), dlogits


@dataclass
class ForwardCache:
    activations: list[np.ndarray]  # input followed by each hidden layer's output
    pre: list[np.ndarray]
    logits: np.ndarray
    probs: np.ndarray

    @property
    def features(self) -> np.ndarray:
        return self.activations[-1]


def forward_batch(net: NetworkState, X: np.ndarray) -> ForwardCache:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise DimensionMismatch(f"expected inputs of dim {net.input_dim}, got shape {X.shape}")
    acts = [X]
    pres = []
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        pre = acts[-1] @ w.T + b
        pres.append(pre)
        acts.append(np.maximum(pre, 0.0))
    logits = acts[-1] @ net.weights[-1].T + net.biases[-1]
    return ForwardCache(acts, pres, logits, softmax(logits))


def forward(net: NetworkState, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (features, logits, probs) for one input vector."""
    cache = forward_batch(net, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return cache.features[0], cache.logits[0], cache.probs[0]


def embed(net: NetworkState, X: np.ndarray) -> np.ndarray:
    return forward_batch(net, X).features


def predict(net: NetworkState, X: np.ndarray) -> np.ndarray:
    return np.argmax(forward_batch(net, X).logits, axis=1)


def _mean_ce(logits: np.ndarray, y: np.ndarray) -> float:
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_norm - shifted[np.arange(len(y)), y]))


def _stack(batch: Sequence[ClassBatch], num_classes: int):
    if not batch:
        raise DegenerateBatch("empty batch")
    for cb in batch:
        if not 0 <= cb.class_id < num_classes:
            raise InvalidLabel(f"class {cb.class_id} outside [0, {num_classes})")
        if cb.count < 2:
            raise DegenerateBatch(f"class {cb.class_id} has {cb.count} sample(s) in the batch, need 2")
    X = np.concatenate([cb.features for cb in batch], axis=0)
    y = np.concatenate([np.full(cb.count, cb.class_id) for cb in batch])
    return X, y


@dataclass
class JointResult:
    l_joint: float
    l_s: float
    l_stat: float
    grads: list[np.ndarray]  # aligned with NetworkState.params()


def joint_loss(net: NetworkState, batch: Sequence[ClassBatch], beta: float, loss_cfg: LossConfig) -> float:
    """Scalar L_s + beta * L on a batch, without gradients."""
    X, y = _stack(batch, net.num_classes)
    cache = forward_batch(net, X)
    n = len(y)
    l_s = _mean_ce(cache.logits, y)
    zs = np.split(cache.features, np.cumsum([cb.count for cb in batch])[:-1])
    report = loss_total([ClassBatch(cb.class_id, z) for cb, z in zip(batch, zs)], loss_cfg, with_grads=False)
    return l_s + beta * report.total


def joint_gradients(net: NetworkState, batch: Sequence[ClassBatch], beta: float,
                    loss_cfg: LossConfig) -> JointResult:
    X, y = _stack(batch, net.num_classes)
    counts = [cb.count for cb in batch]
    n = len(y)
    cache = forward_batch(net, X)
    z = cache.features
    l_s = _mean_ce(cache.logits, y)

    zs = np.split(z, np.cumsum(counts)[:-1])
    z_batches = [ClassBatch(cb.class_id, zc) for cb, zc in zip(batch, zs)]
    report = loss_total(z_batches, loss_cfg, with_grads=beta != 0)

    dlogits = cache.probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    # gradients collected head-first, reversed into params() order at the end
    grads_rev = [dlogits.sum(axis=0), dlogits.T @ z]
    dz = dlogits @ net.weights[-1]
    if beta != 0:
        dz = dz + beta * np.concatenate(report.grads, axis=0)
    delta = dz
    for layer in range(len(net.weights) - 2, -1, -1):
        dpre = delta * (cache.pre[layer] > 0)
        grads_rev += [dpre.sum(axis=0), dpre.T @ cache.activations[layer]]
        if layer:
            delta = dpre @ net.weights[layer]
    grads = grads_rev[::-1]
    return JointResult(l_s + beta * report.total, l_s, report.total, grads)


def apply_update(net: NetworkState, grads: list[np.ndarray], lr: float) -> NetworkState:
    params = [p - lr * g for p, g in zip(net.params(), grads)]
    return NetworkState(params[0::2], params[1::2], net.seed, net.iteration + 1)


def train_step(net: NetworkState, batch: Sequence[ClassBatch], cfg: TrainConfig):
    """One SGD step on L_joint = L_s + beta * L. Returns (net, l_joint, l_s, l_stat)."""
    res = joint_gradients(net, batch, cfg.beta, cfg.loss_cfg)
    return apply_update(net, res.grads, cfg.lr), res.l_joint, res.l_s, res.l_stat


@dataclass(frozen=True)
class LossRecord:
    iteration: int
    l_joint: float
    l_s: float
    l_stat: float


def train(net: NetworkState, dataset, cfg: TrainConfig, rng: np.random.Generator,
          log: Callable[[LossRecord], None] | None = None) -> tuple[NetworkState, list[LossRecord]]:
    """Run cfg.iterations SGD steps on stratified batches drawn from ``rng``."""
    from .data import sample_batch  # local import keeps model usable without data

    curve = []
    for it in range(1, cfg.iterations + 1):
        batch = sample_batch(dataset, cfg.batch_size, rng)
        net, l_joint, l_s, l_stat = train_step(net, batch, cfg)
        rec = LossRecord(it, l_joint, l_s, l_stat)
        curve.append(rec)
        if log is not None:
            log(rec)
    return net, curve


def fit(dataset, cfg: TrainConfig, log=None) -> tuple[NetworkState, list[LossRecord]]:
    """Initialize from cfg.seed and train; one generator feeds init and sampling."""
    if cfg.batch_size < 2 * dataset.num_classes:
        raise ConfigError(f"batch_size {cfg.batch_size} < 2 * {dataset.num_classes} classes")
    rng = np.random.default_rng(cfg.seed)
    dims = [dataset.feature_dim, *cfg.hidden_dims, dataset.num_classes]
    net = init_network(dims, rng, cfg.init_std)
    net.seed = cfg.seed
    return train(net, dataset, cfg, rng, log)


# checkpoint container ---------------------------------------------------------

def save_checkpoint(net: NetworkState, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": net.dims,
        "seed": net.seed,
        "iteration": net.iteration,
        "layers": [
            {"rows": int(w.shape[0]), "cols": int(w.shape[1]),
             "weight": [float(v) for v in w.ravel(order="C")],
             "bias": [float(v) for v in b]}
            for w, b in zip(net.weights, net.biases)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> NetworkState:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a checkpoint ({exc})") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: unknown format {doc.get('format')!r}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {doc.get('version')!r}")
    weights, biases = [], []
    for i, layer in enumerate(doc["layers"]):
        w = np.array(layer["weight"], dtype=np.float64)
        if w.size != layer["rows"] * layer["cols"]:
            raise CheckpointError(f"{path}: layer {i} has {w.size} weights, expected {layer['rows']}x{layer['cols']}")
        weights.append(w.reshape(layer["rows"], layer["cols"]))
        biases.append(np.array(layer["bias"], dtype=np.float64))
    net = NetworkState(weights, biases, doc.get("seed"), int(doc.get("iteration", 0)))
    if net.dims != list(doc["dims"]):
        raise CheckpointError(f"{path}: dims {doc['dims']} disagree with layer shapes {net.dims}")
    return net
