import numpy as np
import pytest

from geometry import matching
from geometry.boxes import BoundingBox, iou
from geometry.matching import MetricsReport, f1_sweep, greedy_match, metrics, pool_reports
from synthetic import random_boxes

CUTOFF_GRID = [round(0.05 * k, 10) for k in range(1, 20)]


def brute_force_greedy(preds, truths, cutoff):
    """Re-scans every remaining pair each step; lowest (pred, truth) wins ties."""
    free_p, free_t = list(range(len(preds))), list(range(len(truths)))
    pairs = []
    while True:
        best = None
        for p in free_p:
            for t in free_t:
                value = iou(preds[p], truths[t])
                if value > 0 and value >= cutoff and (best is None or value > best[2]):
                    best = (p, t, value)
        if best is None:
            return pairs
        pairs.append(best)
        free_p.remove(best[0])
        free_t.remove(best[1])


def test_identical_sets_match_completely(rng):
    boxes = random_boxes(rng, 6)
    # drop exact duplicates so the identity pairing is the only greedy outcome
    boxes = list(dict.fromkeys(boxes))
    result = greedy_match(boxes, boxes, 0.95)
    assert sorted((p, t) for p, t, _ in result.pairs) == [(i, i) for i in range(len(boxes))]
    assert result.unmatched_predictions == [] and result.unmatched_truths == []


def test_greedy_takes_global_maximum_first(monkeypatch):
    monkeypatch.setattr(matching, "iou_matrix", lambda preds, truths: np.array([[0.9, 0.5], [0.6, 0.8]]))
    box = BoundingBox(0, 0, 1, 1)
    result = greedy_match([box, box], [box, box], 0.15)
    assert [(p, t) for p, t, _ in result.pairs] == [(0, 0), (1, 1)]


def test_equal_iou_rivals_are_counted_as_ties(monkeypatch):
    monkeypatch.setattr(matching, "iou_matrix", lambda preds, truths: np.array([[0.5, 0.5]]))
    box = BoundingBox(0, 0, 1, 1)
    result = greedy_match([box], [box, box], 0.15)
    assert [(p, t) for p, t, _ in result.pairs] == [(0, 0)]
    assert result.ties == 1


@pytest.mark.parametrize("cutoff", [0.05, 0.15, 0.5])
def test_greedy_equals_brute_force_oracle(cutoff):
    rng = np.random.default_rng(int(cutoff * 1000))
    for _ in range(1000):
        preds = random_boxes(rng, int(rng.integers(0, 9)))
        truths = random_boxes(rng, int(rng.integers(0, 9)))
        result = greedy_match(preds, truths, cutoff)
        expected = brute_force_greedy(preds, truths, cutoff)
        assert [(p, t) for p, t, _ in result.pairs] == [(p, t) for p, t, _ in expected]
        assert all(v >= cutoff for _, _, v in result.pairs)
        report = metrics(result)
        assert report.tp + report.fp == len(preds)
        assert report.tp + report.fn == len(truths)


def test_f1_non_increasing_over_cutoffs():
    rng = np.random.default_rng(7)
    violations = 0
    for _ in range(200):
        preds = random_boxes(rng, int(rng.integers(1, 9)))
        truths = random_boxes(rng, int(rng.integers(1, 9)))
        reports = f1_sweep(preds, truths, CUTOFF_GRID)
        f1 = [r.f1 for r in reports]
        violations += sum(1 for a, b in zip(f1, f1[1:]) if b > a + 1e-12)
        pairs_low = {(p, t) for p, t, _ in greedy_match(preds, truths, 0.05).pairs}
        pairs_high = {(p, t) for p, t, _ in greedy_match(preds, truths, 0.5).pairs}
        assert pairs_high <= pairs_low
    assert violations == 0


def test_f1_sweep_requires_sorted_cutoffs():
    with pytest.raises(ValueError):
        f1_sweep([], [], [0.5, 0.15])


def test_greedy_match_rejects_bad_cutoff():
    with pytest.raises(ValueError):
        greedy_match([], [], 1.2)


@pytest.mark.parametrize(
    "tp, fp, fn, precision, recall, f1",
    [
        (8, 1, 1, 8 / 9, 8 / 9, 8 / 9),
        (0, 0, 0, 0.0, 0.0, 0.0),
        (5, 5, 0, 0.5, 1.0, 2 / 3),
        (10, 0, 0, 1.0, 1.0, 1.0),
        (0, 3, 0, 0.0, 0.0, 0.0),
        (0, 0, 4, 0.0, 0.0, 0.0),
        (3, 1, 2, 0.75, 0.6, 2 / 3),
        (1, 1, 1, 0.5, 0.5, 0.5),
        (9, 3, 1, 0.75, 0.9, 1.35 / 1.65),
        (2, 0, 6, 1.0, 0.25, 0.4),
    ],
)
def test_metrics_table(tp, fp, fn, precision, recall, f1):
    report = MetricsReport.from_counts(tp, fp, fn, 0.15)
    assert report.precision == pytest.approx(precision, abs=1e-12)
    assert report.recall == pytest.approx(recall, abs=1e-12)
    assert report.f1 == pytest.approx(f1, abs=1e-12)


def test_pooled_report_recomputes_from_summed_counts():
    reports = [MetricsReport.from_counts(3, 1, 0, 0.15), MetricsReport.from_counts(1, 0, 3, 0.15)]
    pooled = pool_reports(reports, 0.15)
    assert (pooled.tp, pooled.fp, pooled.fn) == (4, 1, 3)
    assert pooled.f1 == pytest.approx(MetricsReport.from_counts(4, 1, 3, 0.15).f1)
