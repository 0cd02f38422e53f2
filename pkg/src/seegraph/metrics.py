"""Classification metrics: accuracy, macro-F1, macro one-vs-rest AUROC.

AUROC uses the rank statistic with average ranks for ties (ties contribute
1/2), which equals brute-force counting of correctly ordered positive/negative
pairs. Macro averages are unweighted over classes; a class with no positives
or no negatives in the evaluation set has an undefined AUROC and is excluded
from the macro mean.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ValidationError


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> np.ndarray:
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    for truth, pred in zip(y_true, y_pred):
        matrix[int(truth), int(pred)] += 1
    return matrix


def accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    if len(y_true) == 0:
        raise ValidationError("empty evaluation set")
    return float(np.mean(np.asarray(y_true) == np.asarray(y_pred)))


def precision_recall(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-class precision and recall; 0 where the denominator vanishes."""
    predicted = matrix.sum(axis=0).astype(np.float64)
    actual = matrix.sum(axis=1).astype(np.float64)
    correct = np.diag(matrix).astype(np.float64)
    precision = np.divide(correct, predicted, out=np.zeros_like(correct),
                          where=predicted > 0)
    recall = np.divide(correct, actual, out=np.zeros_like(correct),
                       where=actual > 0)
    return precision, recall


def macro_f1(matrix: np.ndarray) -> float:
    """Unweighted mean of per-class F1; a class absent from both predictions
    and truth contributes F1 = 0."""
    precision, recall = precision_recall(matrix)
    denom = precision + recall
    f1 = np.divide(2.0 * precision * recall, denom,
                   out=np.zeros_like(denom), where=denom > 0)
    return float(f1.mean())


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing their average rank."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    start = 0
    while start < scores.size:
        stop = start
        while stop + 1 < scores.size and sorted_scores[stop + 1] == sorted_scores[start]:
            stop += 1
        ranks[order[start:stop + 1]] = 0.5 * (start + stop) + 1.0
        start = stop + 1
    return ranks


def auroc_binary(labels: np.ndarray, scores: np.ndarray) -> float:
    """Rank-statistic AUROC for a binary ground truth (1 = positive)."""
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUROC needs both positives and negatives")
    ranks = _average_ranks(np.asarray(scores, dtype=np.float64))
    pos_rank_sum = ranks[labels].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def macro_auroc(y_true: np.ndarray, probabilities: np.ndarray) -> float:
    """Unweighted mean of one-vs-rest AUROCs over classes present with both
    positives and negatives."""
    y_true = np.asarray(y_true)
    values = []
    for cls in range(probabilities.shape[1]):
        positives = y_true == cls
        if positives.all() or not positives.any():
            continue
        values.append(auroc_binary(positives, probabilities[:, cls]))
    if not values:
        raise ValidationError("no class admits an AUROC on this split")
    return float(np.mean(values))


@dataclass
class MetricsReport:
    accuracy: float
    macro_auroc: float
    macro_f1: float
    per_class_precision: list[float]
    per_class_recall: list[float]
    confusion: list[list[int]]
    mask_retention: float
    n_subjects: int
    precision_at_k: float | None = None
    band: str | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def build_report(y_true: np.ndarray, probabilities: np.ndarray,
                 mask_retention: float, band: str | None = None) -> MetricsReport:
    if len(y_true) == 0:
        raise ValidationError("empty evaluation set")
    y_pred = probabilities.argmax(axis=1)
    n_classes = probabilities.shape[1]
    matrix = confusion_matrix(y_true, y_pred, n_classes)
    precision, recall = precision_recall(matrix)
    return MetricsReport(
        accuracy=accuracy(y_true, y_pred),
        macro_auroc=macro_auroc(y_true, probabilities),
        macro_f1=macro_f1(matrix),
        per_class_precision=[float(p) for p in precision],
        per_class_recall=[float(r) for r in recall],
        confusion=matrix.tolist(),
        mask_retention=float(mask_retention),
        n_subjects=int(len(y_true)),
        band=band,
    )
