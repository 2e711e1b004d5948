"""
Prediction / ground-truth matching and detector metrics.

Matching is greedy on the global IoU matrix: the largest remaining entry at
or above the cutoff is paired, its row and column are removed, and the scan
repeats. Because the pick order depends only on IoU values, the pairs found at
a higher cutoff are always a prefix of the pairs found at a lower one.
"""
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from geometry.boxes import BoundingBox, iou_matrix


@dataclass(frozen=True)
class MatchResult:
    pairs: List[Tuple[int, int, float]]
    unmatched_predictions: List[int]
    unmatched_truths: List[int]
    cutoff: float
    ties: int = 0  # picks where an equal-IoU rival shared the row or column


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    cutoff_iou: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, cutoff_iou: float) -> "MetricsReport":
        """Derives precision, recall and F1; each is 0 when its denominator is 0."""
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return cls(tp, fp, fn, precision, recall, f1, cutoff_iou)


def greedy_match(preds: Sequence[BoundingBox], truths: Sequence[BoundingBox], cutoff: float) -> MatchResult:
    """
    Pairs predictions with ground truths by repeatedly taking the global IoU maximum.

    Only overlapping pairs (IoU > 0) with IoU >= cutoff are eligible. Ties on
    IoU go to the lower prediction index, then the lower truth index.

    Args:
        preds (Sequence[BoundingBox]): Predicted boxes.
        truths (Sequence[BoundingBox]): Ground-truth boxes.
        cutoff (float): Minimum IoU for a match, in [0, 1].

    Returns:
        MatchResult: Pairs in pick order plus the leftover indices.
    """
    if not 0.0 <= cutoff <= 1.0:
        raise ValueError(f"Cutoff IoU must be in [0, 1], got {cutoff}")

    scores = iou_matrix(preds, truths)
    eligible = np.where((scores >= cutoff) & (scores > 0.0), scores, -1.0)

    pairs = []
    ties = 0
    while eligible.size and eligible.max() >= 0.0:
        # argmax scans row-major, so the first maximum has the lowest (pred, truth) index
        p, t = np.unravel_index(int(np.argmax(eligible)), eligible.shape)
        best = eligible[p, t]
        if (np.count_nonzero(eligible[p, :] == best) > 1) or (np.count_nonzero(eligible[:, t] == best) > 1):
            ties += 1
        pairs.append((int(p), int(t), float(scores[p, t])))
        eligible[p, :] = -1.0
        eligible[:, t] = -1.0

    matched_p = {p for p, _, _ in pairs}
    matched_t = {t for _, t, _ in pairs}
    return MatchResult(
        pairs=pairs,
        unmatched_predictions=[i for i in range(len(preds)) if i not in matched_p],
        unmatched_truths=[j for j in range(len(truths)) if j not in matched_t],
        cutoff=cutoff,
        ties=ties,
    )


def metrics(match: MatchResult) -> MetricsReport:
    tp = len(match.pairs)
    return MetricsReport.from_counts(tp, len(match.unmatched_predictions), len(match.unmatched_truths), match.cutoff)


def f1_sweep(preds: Sequence[BoundingBox], truths: Sequence[BoundingBox], cutoffs: Sequence[float]) -> List[MetricsReport]:
    """One MetricsReport per cutoff, each from its own greedy match."""
    if any(b < a for a, b in zip(cutoffs, cutoffs[1:])):
        raise ValueError("Cutoffs must be sorted ascending")
    return [metrics(greedy_match(preds, truths, c)) for c in cutoffs]


def pool_reports(reports: Iterable[MetricsReport], cutoff_iou: float) -> MetricsReport:
    """Sums TP/FP/FN over frames and recomputes the ratios."""
    tp = fp = fn = 0
    for r in reports:
        tp, fp, fn = tp + r.tp, fp + r.fp, fn + r.fn
    return MetricsReport.from_counts(tp, fp, fn, cutoff_iou)
