"""Binary classification metrics with an explicit positive class."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from ..weaklabel import WeakLabel
from .model import LABEL_TO_CLASS, CnnModel, predict_batch


def f1_from_precision_recall(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class EvalMetrics:
    """Precision/recall/F1/accuracy in [0, 1].

    ``zero_division`` names metrics whose denominator was 0 and were
    therefore reported as 0.
    """

    precision: float
    recall: float
    f1: float
    accuracy: float
    zero_division: tuple[str, ...] = ()

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tn: int) -> "EvalMetrics":
        total = tp + fp + fn + tn
        if total == 0:
            raise DataError("cannot evaluate an empty labeled set")
        flags = []
        if tp + fp > 0:
            precision = tp / (tp + fp)
        else:
            precision, flags = 0.0, flags + ["precision"]
        if tp + fn > 0:
            recall = tp / (tp + fn)
        else:
            recall, flags = 0.0, flags + ["recall"]
        return cls(
            precision=precision,
            recall=recall,
            f1=f1_from_precision_recall(precision, recall),
            accuracy=(tp + tn) / total,
            zero_division=tuple(flags),
        )


def confusion_counts(
    predicted: np.ndarray, actual: np.ndarray, positive_class: int
) -> tuple[int, int, int, int]:
    pred_pos = predicted == positive_class
    act_pos = actual == positive_class
    tp = int(np.sum(pred_pos & act_pos))
    fp = int(np.sum(pred_pos & ~act_pos))
    fn = int(np.sum(~pred_pos & act_pos))
    tn = int(np.sum(~pred_pos & ~act_pos))
    return tp, fp, fn, tn


def evaluate(
    model: CnnModel,
    tensors: np.ndarray,
    labels: np.ndarray,
    positive_class: WeakLabel,
) -> EvalMetrics:
    """Score a model on a labeled set; positive_class must be stated explicitly."""
    if positive_class not in LABEL_TO_CLASS:
        raise DataError(f"positive_class must be Male or Female, got {positive_class}")
    labels = np.asarray(labels, dtype=np.intp)
    if len(labels) == 0:
        raise DataError("cannot evaluate an empty labeled set")
    predicted = np.empty(len(labels), dtype=np.intp)
    for start in range(0, len(labels), 512):
        classes, _ = predict_batch(model, tensors[start : start + 512])
        predicted[start : start + len(classes)] = classes
    tp, fp, fn, tn = confusion_counts(
        predicted, labels, LABEL_TO_CLASS[positive_class]
    )
    return EvalMetrics.from_counts(tp, fp, fn, tn)
