"""Histogram statistics per band and the 49-value plant feature vector.

Feature columns are band-major: for each band in ``BANDS`` order the seven
statistics in ``STAT_NAMES`` order, so column ``f{7*b + s:02d}`` is stat
``s`` of band ``b``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DataError, EmptyCanopyError
from .raster import BANDS, BandId

STAT_NAMES = ("mean", "std", "smoothness", "third_moment", "uniformity", "entropy", "range")
N_STATS = len(STAT_NAMES)
N_FEATURES = len(BANDS) * N_STATS
FEATURE_COLUMNS = tuple(f"f{i:02d}" for i in range(N_FEATURES))
LABELS = ("healthy", "infected")

DEFAULT_BINS = 64
DEFAULT_RANGES = {
    BandId.Blue: (0.0, 1.5),
    BandId.Green: (0.0, 1.5),
    BandId.Red: (0.0, 1.5),
    BandId.RedEdge: (0.0, 1.5),
    BandId.NIR: (0.0, 1.5),
    BandId.Thermal: (0.0, 60.0),
    BandId.Pan: (0.0, 1.5),
}


def feature_name(index: int) -> str:
    band, stat = divmod(index, N_STATS)
    return f"{BANDS[band].value}.{STAT_NAMES[stat]}"


@dataclass(frozen=True)
class Histogram:
    counts: np.ndarray
    range_lo: float
    range_hi: float

    @property
    def n_bins(self) -> int:
        return self.counts.size

    @property
    def p(self) -> np.ndarray:
        total = self.counts.sum()
        return self.counts / total if total else np.zeros(self.n_bins)

    @property
    def centers(self) -> np.ndarray:
        """Bin centres in the band's own units."""
        width = (self.range_hi - self.range_lo) / self.n_bins
        return self.range_lo + (np.arange(self.n_bins) + 0.5) * width

    @property
    def unit_centers(self) -> np.ndarray:
        """Bin centres mapped onto [0, 1]."""
        return (np.arange(self.n_bins) + 0.5) / self.n_bins


def build_histogram(pixels, n_bins: int = DEFAULT_BINS, value_range=(0.0, 1.5)) -> Histogram:
    lo, hi = float(value_range[0]), float(value_range[1])
    if not lo < hi:
        raise DataError(f"histogram range must satisfy lo < hi, got ({lo}, {hi})")
    if n_bins < 1:
        raise DataError("n_bins must be positive")
    px = np.asarray(pixels, dtype=np.float64).reshape(-1)
    if px.size == 0:
        raise EmptyCanopyError("no pixels to histogram (empty canopy mask)")
    if not np.isfinite(px).all():
        raise DataError("histogram input must be finite")
    counts = kernels.histogram_counts(px, lo, hi, n_bins)
    return Histogram(counts, lo, hi)


def table1_features(h: Histogram) -> np.ndarray:
    """The seven histogram statistics, computed on unit-interval bin centres.

    Order: mean, std, smoothness, third moment, uniformity, entropy (bits),
    gray-level range.
    """
    p = h.p
    c = h.unit_centers
    mu = float(np.dot(c, p))
    d = c - mu
    var = float(np.dot(d * d, p))
    sigma = math.sqrt(var)
    smooth = 1.0 - 1.0 / (1.0 + var)
    third = float(np.dot(d * d * d, p))
    uniformity = float(np.dot(p, p))
    nz = p > 0
    entropy = float(-np.sum(p[nz] * np.log2(p[nz]))) + 0.0
    occupied = c[nz]
    rng = float(occupied.max() - occupied.min()) if occupied.size else 0.0
    return np.array([mu, sigma, smooth, third, uniformity, entropy, rng])


@dataclass(frozen=True)
class FeatureConfig:
    n_bins: int = DEFAULT_BINS
    ranges: dict = field(default_factory=lambda: dict(DEFAULT_RANGES))


def extract_plant_features(masked: dict, config: FeatureConfig | None = None) -> np.ndarray:
    """49-value feature vector from per-band canopy pixel lists."""
    config = config or FeatureConfig()
    missing = [b.name for b in BANDS if b not in masked]
    if missing:
        raise DataError(f"bands missing from masked pixels: {missing}")
    empty = [b.name for b in BANDS if np.asarray(masked[b]).size == 0]
    if empty:
        raise EmptyCanopyError(f"empty canopy in bands {empty}")
    parts = [
        table1_features(build_histogram(masked[b], config.n_bins, config.ranges[b]))
        for b in BANDS
    ]
    return np.concatenate(parts)


def silverman_bandwidth(pixels) -> float:
    x = np.asarray(pixels, dtype=np.float64)
    n = x.size
    sd = x.std(ddof=1) if n > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.349) if q75 > q25 else sd
    if spread <= 0:
        spread = max(abs(float(x.mean())), 1.0) * 1e-3
    return 0.9 * spread * n ** (-0.2)


def kde_curve(pixels, bandwidth: float | None = None, grid: int = 256):
    """Gaussian kernel density on a uniform grid over [min - 3bw, max + 3bw].

    Returns ``(x, density)`` arrays. ``bandwidth=None`` uses Silverman's rule.
    """
    x = np.asarray(pixels, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise DataError("kde needs at least one sample")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(x)
    if not bandwidth > 0:
        raise DataError(f"bandwidth must be positive, got {bandwidth}")
    if grid < 2:
        raise DataError("kde grid needs at least 2 points")
    xs = np.linspace(x.min() - 3 * bandwidth, x.max() + 3 * bandwidth, grid)
    dens = np.zeros(grid)
    # chunked to bound memory on large pixel sets
    for start in range(0, x.size, 4096):
        u = (xs[:, None] - x[None, start : start + 4096]) / bandwidth
        dens += np.exp(-0.5 * u * u).sum(axis=1)
    dens /= x.size * bandwidth * math.sqrt(2 * math.pi)
    return xs, dens


@dataclass
class FeatureRecord:
    plant_id: str
    gdd_stage: float
    label: str
    features: np.ndarray
    synthetic: bool = False

    def __post_init__(self):
        if self.label not in LABELS:
            raise DataError(f"label must be one of {LABELS}, got {self.label!r}")
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.shape != (N_FEATURES,):
            raise DataError(f"feature vector must have {N_FEATURES} values, got {self.features.shape}")
        if not np.isfinite(self.features).all():
            raise DataError(f"{self.plant_id}@{self.gdd_stage}: non-finite features")


def _fmt(v: float) -> str:
    return repr(float(v))


def write_feature_csv(records, path, header_lines=()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["plant_id", "gdd_stage", "label", "synthetic", *FEATURE_COLUMNS])
        for r in records:
            wr.writerow(
                [r.plant_id, _fmt(r.gdd_stage), r.label, "true" if r.synthetic else "false",
                 *(_fmt(v) for v in r.features)]
            )


def read_feature_csv(path) -> list[FeatureRecord]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(r for r in fh if not r.startswith("#")))
    except OSError as exc:
        raise DataError(f"cannot read feature file {path}: {exc}") from exc
    out = []
    for row in rows:
        try:
            out.append(
                FeatureRecord(
                    row["plant_id"],
                    float(row["gdd_stage"]),
                    row["label"],
                    np.array([float(row[c]) for c in FEATURE_COLUMNS]),
                    row["synthetic"].strip().lower() == "true",
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"{path}: malformed feature row for {row.get('plant_id')}: {exc}") from exc
    return out


def write_kde_csv(curves: dict, path) -> None:
    """``curves`` maps a series name (e.g. ``"NIR/infected"``) to ``(x, density)``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["series", "x", "density"])
        for name, (xs, ds) in curves.items():
            for x, d in zip(xs, ds):
                wr.writerow([name, _fmt(x), _fmt(d)])
