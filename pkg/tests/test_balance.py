import numpy as np
import pytest

from broomscan.balance import (
    SequenceSample, balance_by_mean_match, balance_by_smote, mean_match_select, nearest_neighbors, smote,
    to_records, to_sequences,
)
from broomscan.errors import DataError
from broomscan.features import FeatureRecord

from conftest import make_samples


def brute_knn(X, i, k):
    d = [(float(np.sum((X[i] - X[j]) ** 2)), j) for j in range(len(X)) if j != i]
    d.sort()
    return [j for _, j in d[:k]], d


def on_segment(p, a, b, tol=1e-9):
    lo, hi = np.minimum(a, b) - tol, np.maximum(a, b) + tol
    if not np.all((p >= lo) & (p <= hi)):
        return False
    diff = b - a
    if not np.any(diff):
        return np.allclose(p, a, atol=tol)
    j = int(np.argmax(np.abs(diff)))
    t = (p[j] - a[j]) / diff[j]
    return np.allclose(p, a + t * diff, atol=tol)


def test_sequence_sample_validation():
    with pytest.raises(DataError):
        SequenceSample("a", (1, 2), np.zeros((1, 49)), "healthy")
    with pytest.raises(DataError):
        SequenceSample("a", (2, 1), np.zeros((2, 49)), "healthy")
    with pytest.raises(DataError):
        SequenceSample("a", (1,), np.zeros((1, 49)), "sick")


def test_to_sequences_drops_incomplete_plants(rng):
    recs = [FeatureRecord("A", s, "healthy", rng.normal(size=49)) for s in (324.0, 574.0)]
    recs.append(FeatureRecord("B", 324.0, "infected", rng.normal(size=49)))
    seqs = to_sequences(recs, (324, 574))
    assert [s.plant_id for s in seqs] == ["A"]
    assert seqs[0].matrix.shape == (2, 49)
    back = to_records(seqs)
    assert [(r.plant_id, r.gdd_stage) for r in back] == [("A", 324.0), ("A", 574.0)]


def test_mean_match_examples():
    maj = [SequenceSample(f"h{i}", (1,), np.full((1, 49), v), "healthy") for i, v in enumerate([0.0, 1.0, 10.0])]
    assert [s.plant_id for s in mean_match_select(maj, 1)] == ["h1"]
    assert mean_match_select(maj, 3) == maj
    with pytest.raises(DataError):
        mean_match_select(maj, 4)


def test_mean_match_field_counts():
    samples = make_samples(49, 251)
    out = balance_by_mean_match(samples)
    assert sum(s.label == "infected" for s in out) == 49
    assert sum(s.label == "healthy" for s in out) == 49


def test_mean_match_brute_force(rng):
    maj = make_samples(0, 40, steps=2, seed=3)
    X = np.stack([s.flat() for s in maj])
    Z = (X - X.mean(0)) / X.std(0)
    d = np.sqrt((Z ** 2).sum(1))
    want = {maj[i].plant_id for i in np.argsort(d, kind="stable")[:7]}
    assert {s.plant_id for s in mean_match_select(maj, 7)} == want


def test_knn_matches_brute_force(rng):
    X = rng.normal(size=(60, 8))
    nn = nearest_neighbors(X, 5)
    for i in range(60):
        assert nn[i].tolist() == brute_knn(X, i, 5)[0]


def test_smote_counts_and_empty():
    minority = make_samples(49, 0, steps=5)
    syn = smote(minority, 251, 5, 0)
    assert len(syn) == 202
    assert all(s.synthetic and s.label == "infected" and s.matrix.shape == (5, 49) for s in syn)
    assert smote(minority, 49) == []
    out = balance_by_smote(minority + make_samples(0, 251))
    assert sum(s.label == "infected" for s in out) == 251
    with pytest.raises(DataError):
        smote(minority, 10)


def test_smote_geometry_brute_force():
    minority = make_samples(40, 0, steps=2, dim=49, seed=7)
    syn = smote(minority, 1040, 5, 11)
    assert len(syn) == 1000
    X = np.stack([s.flat() for s in minority])
    Z = (X - X.mean(0)) / X.std(0)
    ids = {s.plant_id: i for i, s in enumerate(minority)}
    knn = {i: brute_knn(Z, i, 5)[0] for i in range(len(minority))}
    for s in syn:
        (src_id, nb_id), = s.parents
        src, nb = ids[src_id], ids[nb_id]
        assert nb in knn[src]
        assert on_segment(s.flat(), X[src], X[nb])


def test_smote_per_stage_geometry():
    minority = make_samples(20, 0, steps=3, dim=49, seed=9)
    syn = smote(minority, 80, 5, 2, per_stage=True)
    ids = {s.plant_id: i for i, s in enumerate(minority)}
    for s in syn:
        assert len(s.parents) == 3
        for t, (a, b) in enumerate(s.parents):
            assert on_segment(s.matrix[t], minority[ids[a]].matrix[t], minority[ids[b]].matrix[t])


def test_smote_deterministic():
    minority = make_samples(15, 0, steps=2)
    a = smote(minority, 50, 5, 3)
    b = smote(minority, 50, 5, 3)
    assert all(x.flat().tobytes() == y.flat().tobytes() and x.plant_id == y.plant_id for x, y in zip(a, b))
