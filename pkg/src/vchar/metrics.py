"""Atomic Accuracy Score, macro CHAR F1 and confusion matrices."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, LabelError

ACCURACY_MODES = ("recall", "precision")


def atomic_accuracy(preds, truths, threshold: float = 0.4, mode: str = "recall") -> float:
    """Mean over windows of the fraction of atomic activities confirmed above ``threshold``.

    ``recall`` (default): of the ground-truth atomics, how many have ``p_i > threshold``.
    ``precision``: of the atomics predicted above threshold, how many are true
    (a window with no detection scores 0).
    """
    if len(preds) != len(truths):
        raise InputError("preds and truths differ in length")
    if not len(preds):
        raise InputError("no windows to score")
    if not 0 < threshold < 1:
        raise InputError("threshold must be in (0, 1)")
    if mode not in ACCURACY_MODES:
        raise InputError(f"mode must be one of {ACCURACY_MODES}")
    scores = []
    for p, truth in zip(preds, truths):
        truth = {int(t) for t in truth}
        if not truth:
            raise InputError("empty ground-truth atomic set")
        detected = set(np.nonzero(np.asarray(p) > threshold)[0].tolist())
        if mode == "recall":
            scores.append(len(truth & detected) / len(truth))
        else:
            scores.append(len(truth & detected) / len(detected) if detected else 0.0)
    return float(np.mean(scores))


def _check_labels(pred_labels, true_labels, m):
    pred = np.asarray(pred_labels, dtype=np.int64)
    true = np.asarray(true_labels, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise InputError("label lists must be 1-D and of equal length")
    for arr in (pred, true):
        if arr.size and (arr.min() < 0 or arr.max() >= m):
            raise LabelError(f"label outside [0, {m})")
    return pred, true


def confusion(pred_labels, true_labels, m: int, normalize: bool = False) -> np.ndarray:
    """``counts[t, p]``; with ``normalize`` rows are divided by their support."""
    pred, true = _check_labels(pred_labels, true_labels, m)
    counts = np.zeros((m, m), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    if not normalize:
        return counts
    return normalize_rows(counts)


def normalize_rows(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    support = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, support, out=np.zeros_like(counts), where=support > 0)


def per_class_prf(counts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    counts = np.asarray(counts, dtype=np.float64)
    tp = np.diag(counts)
    predicted = counts.sum(axis=0)
    actual = counts.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros_like(tp), where=actual > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return precision, recall, f1


def macro_f1_from_counts(counts) -> float:
    counts = np.asarray(counts)
    support = counts.sum(axis=1) > 0
    if not support.any():
        return 0.0
    return float(per_class_prf(counts)[2][support].mean())


def macro_f1(pred_labels, true_labels, m: int) -> float:
    """Macro F1 over classes that occur in ``true_labels`` (0/0 counts as 0)."""
    return macro_f1_from_counts(confusion(pred_labels, true_labels, m))


@dataclass
class MetricsReport:
    char_f1: float
    atomic_accuracy: float
    threshold: float
    precision: list
    recall: list
    f1: list
    counts: list
    confusion: list
    class_names: list = field(default_factory=list)
    n_windows: int = 0

    def to_dict(self) -> dict:
        return {
            "char_f1": self.char_f1,
            "atomic_accuracy": self.atomic_accuracy,
            "threshold": self.threshold,
            "n_windows": self.n_windows,
            "class_names": list(self.class_names),
            "per_class": {"precision": self.precision, "recall": self.recall, "f1": self.f1},
            "counts": self.counts,
            "confusion": self.confusion,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        pc = d["per_class"]
        return cls(d["char_f1"], d["atomic_accuracy"], d["threshold"], pc["precision"], pc["recall"],
                   pc["f1"], d["counts"], d["confusion"], d.get("class_names", []), d.get("n_windows", 0))

    def confusion_tsv(self) -> str:
        names = self.class_names or [str(i) for i in range(len(self.confusion))]
        lines = ["true\\pred\t" + "\t".join(names)]
        for name, row in zip(names, self.confusion):
            lines.append(name + "\t" + "\t".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def build_report(pred_labels, true_labels, m: int, atomic_preds, atomic_truths,
                 threshold: float = 0.4, class_names=None, accuracy_mode: str = "recall") -> MetricsReport:
    counts = confusion(pred_labels, true_labels, m)
    p, r, f = per_class_prf(counts)
    return MetricsReport(
        char_f1=macro_f1_from_counts(counts),
        atomic_accuracy=atomic_accuracy(atomic_preds, atomic_truths, threshold, accuracy_mode),
        threshold=float(threshold),
        precision=p.tolist(), recall=r.tolist(), f1=f.tolist(),
        counts=counts.tolist(), confusion=normalize_rows(counts).tolist(),
        class_names=list(class_names or []), n_windows=len(pred_labels),
    )


def parse_confusion_tsv(text: str) -> tuple[list[str], np.ndarray]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    names = lines[0].split("\t")[1:]
    rows = [[float(v) for v in ln.split("\t")[1:]] for ln in lines[1:]]
    return names, np.array(rows)
