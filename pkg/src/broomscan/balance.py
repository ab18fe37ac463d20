"""Class balancing: mean-matched majority downselection and SMOTE."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .features import LABELS, N_FEATURES, FeatureRecord

DEFAULT_K = 5


@dataclass
class SequenceSample:
    """One plant across an ordered list of growth stages."""

    plant_id: str
    stages: tuple
    matrix: np.ndarray
    label: str
    synthetic: bool = False
    parents: tuple = field(default=(), compare=False)

    def __post_init__(self):
        self.stages = tuple(float(s) for s in self.stages)
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.label not in LABELS:
            raise DataError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.stages) or not self.stages:
            raise DataError(
                f"{self.plant_id}: matrix shape {self.matrix.shape} does not fit {len(self.stages)} stages"
            )
        if any(b <= a for a, b in zip(self.stages, self.stages[1:])):
            raise DataError(f"{self.plant_id}: stages must strictly increase: {self.stages}")

    @property
    def y(self) -> int:
        return LABELS.index(self.label)

    @property
    def length(self) -> int:
        return len(self.stages)

    def flat(self) -> np.ndarray:
        return self.matrix.reshape(-1)


def to_sequences(records, stages) -> list[SequenceSample]:
    """Group stage records by plant into sequences over ``stages``.

    Plants missing any requested stage are dropped (e.g. an empty canopy
    at one stage).
    """
    stages = tuple(float(s) for s in stages)
    by_plant = defaultdict(dict)
    meta = {}
    for r in records:
        by_plant[r.plant_id][float(r.gdd_stage)] = r.features
        prev = meta.setdefault(r.plant_id, (r.label, r.synthetic))
        if prev[0] != r.label:
            raise DataError(f"plant {r.plant_id} carries conflicting labels")
    out = []
    for pid in sorted(by_plant):
        rows = by_plant[pid]
        if all(s in rows for s in stages):
            label, synthetic = meta[pid]
            out.append(SequenceSample(pid, stages, np.stack([rows[s] for s in stages]), label, synthetic))
    return out


def to_records(samples) -> list[FeatureRecord]:
    return [
        FeatureRecord(s.plant_id, st, s.label, s.matrix[i], s.synthetic)
        for s in samples
        for i, st in enumerate(s.stages)
    ]


def _stack(samples) -> np.ndarray:
    shapes = {s.matrix.shape for s in samples}
    if len(shapes) != 1:
        raise DataError(f"samples disagree on sequence shape: {sorted(shapes)}")
    return np.stack([s.flat() for s in samples])


def _zscore_scale(X: np.ndarray):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    return mean, np.where(std > 0, std, 1.0), std > 0


def mean_match_select(majority, n: int) -> list[SequenceSample]:
    """Keep the ``n`` majority samples closest to the majority mean.

    Distance is Euclidean on features z-scored by the majority's own
    statistics; zero-variance features are ignored. Ties go to the smaller
    plant_id.
    """
    majority = list(majority)
    if n > len(majority) or n < 0:
        raise DataError(f"cannot select {n} of {len(majority)} samples")
    if n == len(majority):
        return majority
    X = _stack(majority)
    mean, scale, keep = _zscore_scale(X)
    Z = (X[:, keep] - mean[keep]) / scale[keep]
    dist = np.sqrt(np.sum(Z * Z, axis=1))
    order = sorted(range(len(majority)), key=lambda i: (dist[i], majority[i].plant_id))
    chosen = set(order[:n])
    return [s for i, s in enumerate(majority) if i in chosen]


def nearest_neighbors(X: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other rows of ``X`` (Euclidean), nearest first.

    Equal distances keep the lower row index first.
    """
    m = X.shape[0]
    d2 = np.empty((m, m))
    for start in range(0, m, 256):
        diff = X[start : start + 256, None, :] - X[None, :, :]
        d2[start : start + 256] = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def _smote_matrix(X: np.ndarray, n_new: int, k: int, rng, standardize: bool):
    """Rows of new points plus ``(source, neighbor)`` index pairs."""
    m = X.shape[0]
    if standardize:
        mean, scale, _ = _zscore_scale(X)
        Z = (X - mean) / scale
    else:
        Z = X
    nn = nearest_neighbors(Z, k)
    out = np.empty((n_new, X.shape[1]))
    pairs = []
    for j in range(n_new):
        src = j % m
        nb = nn[src, rng.integers(k)]
        delta = rng.random()
        out[j] = X[src] + delta * (X[nb] - X[src])
        pairs.append((src, int(nb)))
    return out, pairs


def smote(minority, target_count: int, k: int = DEFAULT_K, rng_seed=0,
          standardize: bool = True, per_stage: bool = False) -> list[SequenceSample]:
    """Oversample ``minority`` up to ``target_count`` samples.

    Returns only the new synthetic samples. Each one interpolates a source
    sample (sources taken round-robin) toward one of its ``k`` nearest
    minority neighbours with a single uniform factor over the whole
    flattened stage-by-feature matrix. With ``per_stage=True`` each stage is
    oversampled independently instead (own neighbours and factors).
    """
    minority = list(minority)
    m = len(minority)
    if m < 2:
        raise DataError("SMOTE needs at least 2 minority samples")
    if not 1 <= k <= m - 1:
        raise DataError(f"k must lie in [1, {m - 1}], got {k}")
    if target_count < m:
        raise DataError(f"target_count {target_count} is below the minority size {m}")
    n_new = target_count - m
    if n_new == 0:
        return []
    rng = np.random.default_rng(rng_seed)
    X = _stack(minority)
    template = minority[0]
    T = template.length
    if per_stage:
        rows = []
        parents = [[] for _ in range(n_new)]
        for t in range(T):
            block = X[:, t * N_FEATURES : (t + 1) * N_FEATURES]
            new, pairs = _smote_matrix(block, n_new, k, rng, standardize)
            rows.append(new)
            for j, pr in enumerate(pairs):
                parents[j].append(pr)
        new = np.concatenate(rows, axis=1)
    else:
        new, pairs = _smote_matrix(X, n_new, k, rng, standardize)
        parents = [[pr] for pr in pairs]
    out = []
    for j in range(n_new):
        src = minority[parents[j][0][0]]
        out.append(
            SequenceSample(
                f"{src.plant_id}~syn{j:04d}",
                template.stages,
                new[j].reshape(T, -1),
                template.label,
                synthetic=True,
                parents=tuple((minority[a].plant_id, minority[b].plant_id) for a, b in parents[j]),
            )
        )
    return out


def balance_by_smote(samples, k: int = DEFAULT_K, rng_seed=0, target: int | None = None,
                     per_stage: bool = False) -> list[SequenceSample]:
    """Originals plus enough synthetic minority samples to match the majority."""
    by_label = defaultdict(list)
    for s in samples:
        by_label[s.label].append(s)
    if len(by_label) != 2:
        raise DataError("balancing needs both classes present")
    minority_label = min(by_label, key=lambda lab: (len(by_label[lab]), lab))
    majority_label = LABELS[1 - LABELS.index(minority_label)]
    target = len(by_label[majority_label]) if target is None else target
    minority = by_label[minority_label]
    k = min(k, len(minority) - 1)
    return list(samples) + smote(minority, target, k, rng_seed, per_stage=per_stage)


def balance_by_mean_match(samples) -> list[SequenceSample]:
    """Minority unchanged plus an equally sized mean-matched majority subset."""
    by_label = defaultdict(list)
    for s in samples:
        by_label[s.label].append(s)
    if len(by_label) != 2:
        raise DataError("balancing needs both classes present")
    minority_label = min(by_label, key=lambda lab: (len(by_label[lab]), lab))
    majority_label = LABELS[1 - LABELS.index(minority_label)]
    kept = mean_match_select(by_label[majority_label], len(by_label[minority_label]))
    kept_ids = {s.plant_id for s in kept}
    return [s for s in samples if s.label == minority_label or s.plant_id in kept_ids]
