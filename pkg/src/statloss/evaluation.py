"""Confusion matrix, OA / AA / Cohen's kappa, and McNemar's paired statistic."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateKappa, EmptyMatrix, InvalidLabel, LengthMismatch

SIGNIFICANCE_Z = 1.96


def confusion(truth: Sequence[int], pred: Sequence[int], num_classes: int | None = None) -> np.ndarray:
    """Counts indexed (true, predicted)."""
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    if truth.shape != pred.shape:
        raise LengthMismatch(f"{truth.size} true labels vs {pred.size} predictions")
    if num_classes is None:
        num_classes = int(max(truth.max(initial=-1), pred.max(initial=-1))) + 1
    for name, arr in (("true", truth), ("predicted", pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise InvalidLabel(f"{name} label outside [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (truth, pred), 1)
    return cm


@dataclass
class Metrics:
    oa: float
    aa: float
    kappa: float
    per_class_acc: list[float | None]
    skipped_classes: list[int] = field(default_factory=list)


def metrics(cm) -> Metrics:
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total <= 0:
        raise EmptyMatrix("confusion matrix has no counts")
    rows = cm.sum(axis=1)
    cols = cm.sum(axis=0)
    diag = np.diag(cm)
    oa = diag.sum() / total
    per_class: list[float | None] = []
    skipped = []
    for c in range(cm.shape[0]):
        if rows[c] == 0:
            per_class.append(None)
            skipped.append(c)
        else:
            per_class.append(float(diag[c] / rows[c]))
    present = [a for a in per_class if a is not None]
    aa = float(np.mean(present))
    # integer numerators keep p_e exact for the example matrices
    p_e = float((rows * cols).sum()) / (total * total)
    if p_e == 1.0:
        if oa == 1.0:
            kappa = 1.0
        else:
            raise DegenerateKappa("chance agreement is 1 but observed agreement is not")
    else:
        kappa = (oa - p_e) / (1.0 - p_e)
    return Metrics(float(oa), aa, float(kappa), per_class, skipped)


def mcnemar(correct_a: Sequence[bool], correct_b: Sequence[bool]) -> float:
    """(f_ab - f_ba) / sqrt(f_ab + f_ba), no continuity correction; 0 if no discordant pairs."""
    a = np.asarray(correct_a, dtype=bool).reshape(-1)
    b = np.asarray(correct_b, dtype=bool).reshape(-1)
    if a.shape != b.shape:
        raise LengthMismatch(f"{a.size} vs {b.size} correctness indicators")
    f_ab = int(np.sum(a & ~b))
    f_ba = int(np.sum(~a & b))
    if f_ab + f_ba == 0:
        return 0.0
    return (f_ab - f_ba) / math.sqrt(f_ab + f_ba)


def is_significant(f: float) -> bool:
    return abs(f) > SIGNIFICANCE_Z


def report_dict(m: Metrics, cm, mcnemar_f: float | None = None, **extra) -> dict:
    doc = asdict(m)
    doc["confusion"] = np.asarray(cm).tolist()
    if mcnemar_f is not None:
        doc["mcnemar_f"] = mcnemar_f
        doc["mcnemar_significant"] = is_significant(mcnemar_f)
    doc.update(extra)
    return doc


def format_report(doc: dict) -> str:
    """Flat key=value lines; lists are comma-joined."""
    lines = []
    for key, value in doc.items():
        if key == "confusion":
            value = ";".join(",".join(str(v) for v in row) for row in value)
        elif isinstance(value, list):
            value = ",".join("nan" if v is None else (f"{v:.6f}" if isinstance(v, float) else str(v)) for v in value)
        elif isinstance(value, float):
            value = f"{value:.6f}"
        lines.append(f"{key}={value}")
    return "\n".join(lines)


def write_report(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
