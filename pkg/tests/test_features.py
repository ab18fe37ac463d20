import math

import numpy as np
import pytest

from broomscan.errors import DataError, EmptyCanopyError
from broomscan.features import (
    DEFAULT_RANGES, N_FEATURES, FeatureConfig, FeatureRecord, Histogram, build_histogram,
    extract_plant_features, feature_name, kde_curve, read_feature_csv, table1_features, write_feature_csv,
)
from broomscan.raster import BANDS, BandId


def stats_oracle(pixels, n_bins, lo, hi):
    """Direct two-pass definitions: count pixels per bin, then each statistic."""
    counts = [0] * n_bins
    for v in pixels:
        v = min(max(v, lo), hi)
        i = int((v - lo) / (hi - lo) * n_bins)
        counts[min(i, n_bins - 1)] += 1
    total = sum(counts)
    p = [c / total for c in counts]
    z = [(i + 0.5) / n_bins for i in range(n_bins)]
    m = sum(zi * pi for zi, pi in zip(z, p))
    var = sum((zi - m) ** 2 * pi for zi, pi in zip(z, p))
    sd = math.sqrt(var)
    R = 1 - 1 / (1 + var)
    mu3 = sum((zi - m) ** 3 * pi for zi, pi in zip(z, p))
    U = sum(pi * pi for pi in p)
    e = -sum(pi * math.log2(pi) for pi in p if pi > 0)
    occ = [zi for zi, pi in zip(z, p) if pi > 0]
    return [m, sd, R, mu3, U, e, max(occ) - min(occ)], counts


def _close(a, b, rel=1e-9):
    return abs(a - b) <= rel * max(abs(a), abs(b)) or abs(a - b) < 1e-15


def test_two_bin_example():
    h = build_histogram([0.1, 0.1, 0.9], 2, (0, 1))
    assert h.counts.tolist() == [2, 1]
    np.testing.assert_allclose(h.p, [2 / 3, 1 / 3])
    one = build_histogram([0.3], 8, (0, 1))
    assert one.counts.sum() == 1 and one.counts.max() == 1


def test_uniform_pixels_binomial(rng):
    h = build_histogram(rng.uniform(0, 1.5, 10_000), 64, (0, 1.5))
    sigma = math.sqrt(10_000 * (1 / 64) * (63 / 64)) / 10_000
    assert np.all(np.abs(h.p - 1 / 64) < 5 * sigma)
    np.testing.assert_allclose(h.centers, (np.arange(64) + 0.5) * 1.5 / 64)


def test_closed_forms_exact():
    u = table1_features(Histogram(np.array([1, 1, 1, 1]), 0.0, 1.0))
    assert u[0] == 0.5 and u[4] == 0.25 and u[5] == 2.0
    one = table1_features(Histogram(np.array([0, 0, 1, 0]), 0.0, 1.0))
    assert one.tolist() == [0.625, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]
    half = table1_features(Histogram(np.array([1, 1]), 0.0, 1.0))
    assert half[1] == 0.25
    assert half[2] == pytest.approx(1 - 1 / 1.0625, abs=1e-15)


def test_two_bin_entropy_and_uniformity_move_oppositely():
    ps = np.linspace(0.01, 0.5, 50)
    feats = [table1_features(Histogram(np.array([p, 1 - p]), 0.0, 1.0)) for p in ps]
    ent = [f[5] for f in feats]
    uni = [f[4] for f in feats]
    assert np.all(np.diff(ent) > 0) and np.all(np.diff(uni) < 0)


def test_statistics_match_direct_oracle(rng):
    for trial in range(100):
        n = int(rng.integers(1, 400))
        lo, hi = (0.0, 60.0) if trial % 3 == 0 else (0.0, 1.5)
        px = rng.normal(rng.uniform(lo, hi), rng.uniform(0.01, 0.3) * (hi - lo), n)
        want, counts = stats_oracle(px.tolist(), 64, lo, hi)
        h = build_histogram(px, 64, (lo, hi))
        assert h.counts.tolist() == counts
        got = table1_features(h)
        for a, b in zip(got, want):
            assert _close(a, b), (trial, got, want)


def test_histogram_errors():
    with pytest.raises(EmptyCanopyError):
        build_histogram([], 4, (0, 1))
    with pytest.raises(DataError):
        build_histogram([np.nan], 4, (0, 1))
    with pytest.raises(DataError):
        build_histogram([0.1], 4, (1, 1))


def test_plant_vector_constant_bands():
    v = extract_plant_features({b: np.full(10, 0.4) for b in BANDS})
    assert v.shape == (N_FEATURES,)
    for i in range(7):
        st = v[7 * i : 7 * i + 7]
        assert st[1] == 0 and st[4] == 1


def test_plant_vector_order_free_and_band_major(rng):
    masked = {b: rng.uniform(0, 1, 50) * (40 if b is BandId.Thermal else 1) for b in BANDS}
    v = extract_plant_features(masked)
    perm = {b: rng.permutation(x) for b, x in masked.items()}
    np.testing.assert_array_equal(v, extract_plant_features(perm))
    for i, b in enumerate(BANDS):
        want, _ = stats_oracle(masked[b].tolist(), 64, *DEFAULT_RANGES[b])
        np.testing.assert_allclose(v[7 * i : 7 * i + 7], want, rtol=1e-9, atol=1e-15)
    assert feature_name(0) == "Blue.mean" and feature_name(48) == "Pan.range"


def test_plant_vector_errors():
    masked = {b: np.ones(3) for b in BANDS}
    masked[BandId.Red] = np.array([])
    with pytest.raises(EmptyCanopyError):
        extract_plant_features(masked)
    del masked[BandId.Red]
    with pytest.raises(DataError):
        extract_plant_features(masked)
    assert FeatureConfig().n_bins == 64


def test_kde_examples(rng):
    xs, d = kde_curve([0.3], 0.05)
    assert xs[np.argmax(d)] == pytest.approx(0.3, abs=(xs[1] - xs[0]))
    np.testing.assert_array_equal(kde_curve([0.3, 0.3], 0.05)[1], d)
    xs, d = kde_curve(rng.normal(size=2000))
    assert np.trapezoid(d, xs) == pytest.approx(1.0, abs=0.02)


def test_feature_csv_round_trip(tmp_path, rng):
    recs = [FeatureRecord(f"P{i}", 324.0, "healthy" if i else "infected", rng.normal(size=49), i == 2)
            for i in range(3)]
    write_feature_csv(recs, tmp_path / "f.csv", ["broomscan test"])
    back = read_feature_csv(tmp_path / "f.csv")
    assert (tmp_path / "f.csv").read_text().startswith("# broomscan test\n")
    for a, b in zip(recs, back):
        assert (a.plant_id, a.gdd_stage, a.label, a.synthetic) == (b.plant_id, b.gdd_stage, b.label, b.synthetic)
        assert a.features.tobytes() == b.features.tobytes()
    with pytest.raises(DataError):
        FeatureRecord("x", 1.0, "healthy", np.zeros(48))
