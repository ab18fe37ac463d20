import numpy as np
import pytest
from hypothesis import given, strategies as st

from broomscan.errors import DataError
from broomscan.evaluate import (
    ConfusionMatrix, confusion, metrics, pct, per_class_report, read_report_csv, render_table, write_report_csv,
)


def count_oracle(preds, labels):
    tp = fp = tn = fn = 0
    for p, y in zip(preds, labels):
        if p == 1 and y == 1:
            tp += 1
        elif p == 1:
            fp += 1
        elif y == 1:
            fn += 1
        else:
            tn += 1
    return tp, fp, tn, fn


def metric_oracle(preds, labels, positive):
    hits = sum(1 for p, y in zip(preds, labels) if p == positive and y == positive)
    predicted = sum(1 for p in preds if p == positive)
    actual = sum(1 for y in labels if y == positive)
    r = hits / actual if actual else 0.0
    p = hits / predicted if predicted else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    acc = sum(1 for a, b in zip(preds, labels) if a == b) / len(labels)
    return p, r, f, acc


def test_confusion_examples():
    y = np.array([1] * 10 + [0] * 5)
    assert confusion(y, y) == ConfusionMatrix(10, 0, 5, 0)
    assert confusion(1 - y, y) == ConfusionMatrix(0, 5, 0, 10)
    with pytest.raises(DataError):
        confusion([1], [1, 0])


def test_random_vectors_match_counting_oracle(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 200))
        preds, labels = rng.integers(0, 2, n), rng.integers(0, 2, n)
        cm = confusion(preds, labels)
        assert (cm.tp, cm.fp, cm.tn, cm.fn) == count_oracle(preds.tolist(), labels.tolist())
        rep = per_class_report(cm)
        for m, positive in ((rep.broomrape, 1), (rep.healthy, 0)):
            assert (m.precision, m.recall, m.f1, m.accuracy) == metric_oracle(preds.tolist(), labels.tolist(), positive)


def test_reference_recall_and_zero_rules():
    m = metrics(ConfusionMatrix(tp=41, fp=0, tn=50, fn=2))
    assert pct(m.recall) == 95.35
    perfect = metrics(ConfusionMatrix(5, 0, 5, 0))
    assert (perfect.precision, perfect.recall, perfect.f1, perfect.accuracy) == (1, 1, 1, 1)
    z = metrics(ConfusionMatrix(0, 0, 3, 4))
    assert z.precision == 0 and z.recall == 0 and "precision" in z.undefined


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_healthy_metrics_equal_swapped(tp, fp, tn, fn):
    if tp + fp + tn + fn == 0:
        return
    cm = ConfusionMatrix(tp, fp, tn, fn)
    rep = per_class_report(cm)
    assert rep.healthy == metrics(ConfusionMatrix(tn, fn, tp, fp))
    if tp == tn and fp == fn:
        b, h = rep.broomrape, rep.healthy
        assert (b.precision, b.recall, b.f1) == (h.precision, h.recall, h.f1)
    for m in (rep.broomrape, rep.healthy):
        assert all(0 <= v <= 1 for v in (m.precision, m.recall, m.f1, m.accuracy))


def test_report_csv_round_trip(tmp_path):
    reps = [per_class_report(ConfusionMatrix(41, 3, 50, 2), "S4", (324, 574), "SMOTE")]
    write_report_csv(reps, tmp_path / "r.csv", ["broomscan 0.1.0", "seed=0"])
    header, rows = read_report_csv(tmp_path / "r.csv")
    assert header == ["broomscan 0.1.0", "seed=0"]
    assert rows[0]["stages"] == "324, 574" and rows[0]["R_b"] == "95.35"
    table = render_table(rows)
    assert table.splitlines()[0].split()[:3] == ["scenario", "stages", "augmentation"]
