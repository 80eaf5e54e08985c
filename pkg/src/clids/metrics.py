"""Confusion counts, the scalar rates built on them, the per-class
classification report, and ROC/AUC.

The positive class is always "malicious" (label 1) for the headline rates:

    accuracy = (TP + TN) / (TP + FP + TN + FN)
    recall   = TP / (TP + FN)
    precision= TP / (TP + FP)
    f1       = 2 * precision * recall / (precision + recall)
    fpr      = FP / (FP + TN)

Any zero denominator yields 0 rather than an exception, so degenerate
evaluation sets report conservatively instead of crashing.  Everything in
the report derives from one ConfusionCounts, which makes the numbers
internally consistent by construction (e.g. weighted-average recall always
equals accuracy in the two-class case).
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, LengthMismatch, SingleClass

__all__ = [
    "ConfusionCounts",
    "RocCurve",
    "confusion",
    "scalar_metrics",
    "classification_report",
    "roc_and_auc",
]

CLASS_NAMES = ("benign", "malicious")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    def matrix(self):
        """Rows are true class (benign, malicious), columns predicted."""
        return [[self.tn, self.fp], [self.fn, self.tp]]


@dataclass(frozen=True)
class RocCurve:
    """Threshold-sweep operating points, monotone from (0,0) to (1,1)."""

    points: tuple  # of (fpr, tpr)
    auc: float


def _as_binary(values, name):
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise LengthMismatch(f"{name} must be a flat vector, got shape {arr.shape}")
    return arr.astype(np.int64)


def confusion(labels, predicted):
    labels = _as_binary(labels, "labels")
    predicted = _as_binary(predicted, "predicted")
    if labels.shape != predicted.shape:
        raise LengthMismatch(
            f"labels ({labels.shape[0]}) and predictions ({predicted.shape[0]}) "
            f"differ in length")
    if labels.size == 0:
        raise EmptyInput("cannot build a confusion matrix from zero samples")
    return ConfusionCounts(
        tp=int(((labels == 1) & (predicted == 1)).sum()),
        tn=int(((labels == 0) & (predicted == 0)).sum()),
        fp=int(((labels == 0) & (predicted == 1)).sum()),
        fn=int(((labels == 1) & (predicted == 0)).sum()),
    )


def _safe_div(num, den):
    return num / den if den else 0.0


def _prf(tp, fp, fn):
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    f1 = _safe_div(2.0 * precision * recall, precision + recall)
    return precision, recall, f1


def scalar_metrics(c):
    """The five headline rates with malicious as the positive class."""
    precision, recall, f1 = _prf(c.tp, c.fp, c.fn)
    return {
        "accuracy": _safe_div(c.tp + c.tn, c.total),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "fpr": _safe_div(c.fp, c.fp + c.tn),
    }


def classification_report(labels, predicted):
    """Per-class precision/recall/F1/support plus macro and weighted
    averages and the confusion matrix (raw and row-normalized)."""
    c = confusion(labels, predicted)
    # Per-class view: treat each class as positive in turn.  For benign
    # that swaps the roles of the counts.
    per_class = {
        CLASS_NAMES[0]: _prf(c.tn, c.fn, c.fp) + (c.tn + c.fp,),
        CLASS_NAMES[1]: _prf(c.tp, c.fp, c.fn) + (c.tp + c.fn,),
    }
    supports = {name: vals[3] for name, vals in per_class.items()}
    total = c.total

    def avg(idx, weights=None):
        if weights is None:
            return sum(vals[idx] for vals in per_class.values()) / len(per_class)
        return sum(vals[idx] * weights[name]
                   for name, vals in per_class.items()) / total

    matrix = c.matrix()
    normalized = []
    for row in matrix:
        s = sum(row)
        normalized.append([v / s if s else 0.0 for v in row])

    report = dict(scalar_metrics(c))
    report["per_class"] = {
        name: {"precision": vals[0], "recall": vals[1],
               "f1": vals[2], "support": vals[3]}
        for name, vals in per_class.items()
    }
    report["macro_avg"] = {
        "precision": avg(0), "recall": avg(1), "f1": avg(2)}
    report["weighted_avg"] = {
        "precision": avg(0, supports), "recall": avg(1, supports),
        "f1": avg(2, supports)}
    report["confusion"] = {
        "tp": c.tp, "tn": c.tn, "fp": c.fp, "fn": c.fn,
        "matrix": matrix,
        "matrix_normalized": normalized,
    }
    return report


def roc_and_auc(labels, scores):
    """ROC from a sweep over every distinct score, AUC by trapezoid.

    ``scores`` are malicious-class probabilities; a sample is predicted
    malicious when its score >= threshold.  Tied scores collapse into one
    operating point, which makes the trapezoid AUC equal the pairwise
    ranking statistic with ties counted half.
    """
    labels = _as_binary(labels, "labels")
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape:
        raise LengthMismatch(
            f"labels ({labels.shape[0]}) and scores ({scores.shape[0]}) "
            f"differ in length")
    if labels.size == 0:
        raise EmptyInput("cannot build a ROC curve from zero samples")
    pos = int((labels == 1).sum())
    neg = labels.size - pos
    if pos == 0 or neg == 0:
        raise SingleClass(
            "ROC needs both classes present; "
            f"got {pos} malicious / {neg} benign")

    order = np.argsort(-scores, kind="stable")
    sorted_labels = labels[order]
    sorted_scores = scores[order]
    tps = np.cumsum(sorted_labels == 1)
    fps = np.cumsum(sorted_labels == 0)
    # Keep only the last index of each tied-score run: thresholds are the
    # distinct score values.
    distinct = np.flatnonzero(np.diff(sorted_scores) != 0.0)
    last = np.concatenate([distinct, [labels.size - 1]])

    points = [(0.0, 0.0)]
    for i in last:
        points.append((float(fps[i] / neg), float(tps[i] / pos)))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    deduped = [points[0]]
    for p in points[1:]:
        if p != deduped[-1]:
            deduped.append(p)

    auc = 0.0
    for (x0, y0), (x1, y1) in zip(deduped, deduped[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return RocCurve(points=tuple(deduped), auc=float(auc))
