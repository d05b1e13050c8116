"""Datasets: CSV and band-cube I/O, patch extraction, splits, batches, Gaussian synthesis."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .class_stats import ClassBatch
from .errors import (
    BatchTooSmall,
    DimensionMismatch,
    EmptyFile,
    InsufficientClassSamples,
    InvalidLabel,
    NoLabeledPixels,
    NotPositiveDefinite,
    ParseError,
    RaggedRows,
)
from .numerics import cholesky_factor

SYNTH_JITTER = 1e-12


@dataclass(eq=False)
class Dataset:
    features: np.ndarray  # (N, p)
    labels: np.ndarray  # (N,) ints in [0, num_classes)
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise DimensionMismatch(f"features {self.features.shape} vs labels {self.labels.shape}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InvalidLabel(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def indices_of(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)


# CSV ------------------------------------------------------------------------

def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_csv(path) -> Dataset:
    """Rows of reals followed by an integer label; an optional header is skipped."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    rows = [(i, r) for i, r in enumerate(csv.reader(io.StringIO(text)), start=1) if r and any(c.strip() for c in r)]
    if rows and not _is_number(rows[0][1][0].strip()):
        rows = rows[1:]
    if not rows:
        raise EmptyFile("no data rows", path)
    width = len(rows[0][1])
    if width < 2:
        raise ParseError("need at least one feature and a label", path, rows[0][0])
    feats, labels = [], []
    for line, row in rows:
        if len(row) != width:
            raise RaggedRows(f"expected {width} fields, found {len(row)}", path, line)
        try:
            feats.append([float(c) for c in row[:-1]])
        except ValueError as exc:
            raise ParseError(f"bad feature value ({exc})", path, line) from None
        lab = row[-1].strip()
        try:
            value = int(lab)
        except ValueError:
            raise ParseError(f"label {lab!r} is not an integer", path, line) from None
        if value < 0:
            raise ParseError(f"negative label {value}", path, line)
        labels.append(value)
    labels_arr = np.array(labels, dtype=np.int64)
    return Dataset(np.array(feats, dtype=np.float64), labels_arr, int(labels_arr.max()) + 1)


def write_csv(dataset: Dataset, path, header: bool = True) -> None:
    lines = []
    if header:
        lines.append(",".join([f"f{j}" for j in range(dataset.feature_dim)] + ["label"]))
    for x, y in zip(dataset.features, dataset.labels):
        lines.append(",".join(repr(float(v)) for v in x) + f",{int(y)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# band cubes -----------------------------------------------------------------

@dataclass(eq=False)
class BandCube:
    values: np.ndarray  # (H, W, B)
    labels: np.ndarray  # (H, W), 0 = unlabeled

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.values.ndim != 3 or self.labels.shape != self.values.shape[:2]:
            raise DimensionMismatch(f"values {self.values.shape} vs labels {self.labels.shape}")


def load_cube(path) -> BandCube:
    """Line 1 "H W B", then H*W*B reals in (row, col, band) order, then H*W labels."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].strip():
        raise EmptyFile("missing 'H W B' header", path, 1)
    try:
        h, w, b = (int(t) for t in lines[0].split())
    except ValueError:
        raise ParseError("header must be three integers 'H W B'", path, 1) from None
    tokens = " ".join(lines[1:]).split()
    need = h * w * b + h * w
    if len(tokens) != need:
        raise ParseError(f"expected {need} values after header, found {len(tokens)}", path)
    try:
        vals = np.array([float(t) for t in tokens[: h * w * b]], dtype=np.float64)
        labs = np.array([int(t) for t in tokens[h * w * b:]], dtype=np.int64)
    except ValueError as exc:
        raise ParseError(str(exc), path) from None
    return BandCube(vals.reshape(h, w, b), labs.reshape(h, w))


def write_cube(cube: BandCube, path) -> None:
    h, w, b = cube.values.shape
    out = [f"{h} {w} {b}"]
    for r in range(h):
        for c in range(w):
            out.append(" ".join(repr(float(v)) for v in cube.values[r, c]))
    for r in range(h):
        out.append(" ".join(str(int(v)) for v in cube.labels[r]))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def extract_patches(cube: BandCube, radius: int) -> Dataset:
    """(2r+1)^2 * B window around each labeled pixel, edge-clamped, labels shifted to 0-based."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    rows, cols = np.nonzero(cube.labels > 0)
    if rows.size == 0:
        raise NoLabeledPixels("cube has no labeled pixels")
    h, w, _ = cube.values.shape
    offsets = np.arange(-radius, radius + 1)
    feats = []
    for r, c in zip(rows, cols):
        rr = np.clip(r + offsets, 0, h - 1)
        cc = np.clip(c + offsets, 0, w - 1)
        feats.append(cube.values[np.ix_(rr, cc)].reshape(-1))
    labels = cube.labels[rows, cols] - 1
    return Dataset(np.array(feats), labels, int(cube.labels.max()))


# splitting and sampling -------------------------------------------------------

def stratified_split(dataset: Dataset, per_class, seed) -> tuple[Dataset, Dataset]:
    """Draw ``per_class`` samples per class (int count or fraction in (0, 1)) into train."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for label in range(dataset.num_classes):
        idx = dataset.indices_of(label)
        have = idx.size
        if isinstance(per_class, float) and 0 < per_class < 1:
            need = math.ceil(per_class * have)
        else:
            need = int(per_class)
        if have <= need:
            raise InsufficientClassSamples(label, have, need)
        chosen = rng.permutation(idx)
        train_idx.append(np.sort(chosen[:need]))
        test_idx.append(np.sort(chosen[need:]))
    return dataset.subset(np.concatenate(train_idx)), dataset.subset(np.concatenate(test_idx))


def batch_counts(num_classes: int, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Equal split of batch_size; the remainder goes to uniformly chosen distinct classes."""
    if batch_size < 2 * num_classes:
        raise BatchTooSmall(f"batch of {batch_size} cannot give 2 samples to each of {num_classes} classes")
    counts = np.full(num_classes, batch_size // num_classes)
    extra = batch_size % num_classes
    if extra:
        counts[rng.choice(num_classes, size=extra, replace=False)] += 1
    return counts


def sample_batch(train: Dataset, batch_size: int, rng: np.random.Generator,
                 classes: Sequence[int] | None = None) -> list[ClassBatch]:
    """Stratified batch: every chosen class gets >= 2 samples, drawn without replacement.

    A class smaller than its share contributes all of its samples.
    """
    if classes is None:
        classes = [c for c in range(train.num_classes) if np.any(train.labels == c)]
    counts = batch_counts(len(classes), batch_size, rng)
    out = []
    for label, n in zip(classes, counts):
        idx = train.indices_of(label)
        if idx.size < 2:
            raise BatchTooSmall(f"class {label} has {idx.size} training sample(s)")
        pick = rng.choice(idx, size=min(int(n), idx.size), replace=False)
        out.append(ClassBatch(int(label), train.features[pick]))
    return out


# synthesis ------------------------------------------------------------------

@dataclass(eq=False)
class GaussianSpec:
    mean: np.ndarray
    cov: np.ndarray
    count: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        p = self.mean.shape[0]
        if self.mean.ndim != 1 or self.cov.shape != (p, p):
            raise DimensionMismatch(f"mean {self.mean.shape} vs covariance {self.cov.shape}")


def synth_gaussians(specs: Sequence[GaussianSpec], seed) -> Dataset:
    """Draw mean + L @ eps per class, with L the Cholesky factor of cov + 1e-12 I."""
    if not specs:
        raise ValueError("need at least one class spec")
    p = specs[0].mean.shape[0]
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    feats, labels = [], []
    for label, spec in enumerate(specs):
        if spec.mean.shape[0] != p:
            raise DimensionMismatch(f"class {label} has dim {spec.mean.shape[0]}, expected {p}")
        try:
            L = cholesky_factor(spec.cov + SYNTH_JITTER * np.eye(p))
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(f"class {label} covariance: {exc}") from None
        eps = rng.standard_normal((spec.count, p))
        feats.append(spec.mean + eps @ L.T)
        labels.append(np.full(spec.count, label))
    return Dataset(np.concatenate(feats), np.concatenate(labels), len(specs))


def simplex_means(num_classes: int, dim: int, distance: float) -> np.ndarray:
    """Vertices of a regular simplex in the first num_classes-1 coordinates, pairwise ``distance`` apart."""
    if num_classes - 1 > dim:
        raise DimensionMismatch(f"{num_classes} equidistant means need dim >= {num_classes - 1}")
    e = np.eye(num_classes)
    centered = e - e.mean(axis=0)
    # orthonormal basis of the centered vertices' span, via SVD
    _, _, vt = np.linalg.svd(centered)
    coords = centered @ vt[: num_classes - 1].T
    coords *= distance / np.sqrt(2.0)
    out = np.zeros((num_classes, dim))
    out[:, : num_classes - 1] = coords
    return out


def benchmark_specs(num_classes=4, dim=6, std=1.0, separation=1.5, count=700) -> list[GaussianSpec]:
    """Isotropic classes whose means are separation * std apart pairwise."""
    means = simplex_means(num_classes, dim, separation * std)
    cov = std ** 2 * np.eye(dim)
    return [GaussianSpec(m, cov, count) for m in means]
