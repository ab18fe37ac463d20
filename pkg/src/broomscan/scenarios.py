"""The four evaluation scenarios: single stage vs growing stage prefixes,
each with mean-matched balancing or SMOTE."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import lstm
from .balance import DEFAULT_K, balance_by_mean_match, balance_by_smote, to_sequences
from .errors import DataError
from .evaluate import confusion, per_class_report
from .phenology import DEFAULT_TARGETS

SCENARIOS = ("S1", "S2", "S3", "S4")
SCOPES = ("train_only", "pre_split")
PARTITIONS = ("train", "val", "test")


@dataclass(frozen=True)
class ScenarioConfig:
    id: str
    stages: tuple = DEFAULT_TARGETS
    smote_scope: str = "train_only"
    seed: int = 0
    k: int = DEFAULT_K
    standardize: bool = True
    smote_per_stage: bool = False

    def __post_init__(self):
        if self.id not in SCENARIOS:
            raise DataError(f"scenario must be one of {SCENARIOS}, got {self.id!r}")
        if self.smote_scope not in SCOPES:
            raise DataError(f"smote_scope must be one of {SCOPES}, got {self.smote_scope!r}")
        stages = tuple(float(s) for s in self.stages)
        if not stages or any(b <= a for a, b in zip(stages, stages[1:])):
            raise DataError(f"stages must be non-empty and ascending: {stages}")
        object.__setattr__(self, "stages", stages)

    @property
    def augmentation(self) -> str:
        return "SMOTE" if self.id in ("S3", "S4") else "None"

    @property
    def sequential(self) -> bool:
        return self.id in ("S2", "S4")

    def combinations(self) -> list[tuple]:
        """Single stages for S1/S3; cumulative prefixes of length >= 2 for S2/S4."""
        if self.sequential:
            return [self.stages[:i] for i in range(2, len(self.stages) + 1)]
        return [(s,) for s in self.stages]


@dataclass
class ScenarioDataset:
    stages: tuple
    samples: list
    pre_split_augmented: bool = False

    @property
    def tag(self) -> str:
        return ", ".join(f"{s:g}" for s in self.stages)

    def class_counts(self) -> dict:
        out = {"healthy": 0, "infected": 0}
        for s in self.samples:
            out[s.label] += 1
        return out


@dataclass
class ScenarioRun:
    report: object
    history: lstm.TrainHistory
    test_ids: list
    test_labels: np.ndarray
    test_probs: np.ndarray
    test_synthetic: list
    partition_sizes: dict = field(default_factory=dict)


def _derived_seed(*key) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])


def split(samples, fractions=(0.65, 0.15, 0.20), seed=0) -> dict:
    """Stratified plant-level assignment to train/val/test.

    Per class, members are sorted by plant_id, shuffled with the seed and
    cut at rounded fractions (each partition keeps at least one member).
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or abs(sum(fractions) - 1) > 1e-9:
        raise DataError(f"split fractions must be three values summing to 1: {fractions}")
    by_label = {}
    for s in samples:
        by_label.setdefault(s.label, set()).add(s.plant_id)
    if len(by_label) < 2:
        raise DataError("split needs both classes present")
    rng = np.random.default_rng(seed)
    assignment = {}
    for label in sorted(by_label):
        ids = sorted(by_label[label])
        n = len(ids)
        if n < 3:
            raise DataError(f"class {label!r} has {n} plants; at least 3 are needed to fill every partition")
        perm = [ids[i] for i in rng.permutation(n)]
        n_val = max(1, int(round(fractions[1] * n)))
        n_test = max(1, int(round(fractions[2] * n)))
        n_train = n - n_val - n_test
        if n_train < 1:
            n_train, n_val = 1, n - 1 - n_test
        cuts = {"train": perm[:n_train], "val": perm[n_train : n_train + n_val], "test": perm[n_train + n_val :]}
        for part, members in cuts.items():
            for pid in members:
                assignment[pid] = part
    return assignment


def partition(samples, assignment) -> dict:
    out = {p: [] for p in PARTITIONS}
    for s in samples:
        out[assignment[s.plant_id]].append(s)
    return out


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, samples) -> "Standardizer":
        if not samples:
            raise DataError("cannot standardize with an empty training set")
        rows = np.concatenate([s.matrix for s in samples], axis=0)
        return cls(rows.mean(axis=0), rows.std(axis=0))

    def transform(self, samples) -> list:
        scale = np.where(self.std > 0, self.std, 1.0)
        center = np.where(self.std > 0, self.mean, 0.0)
        return [replace(s, matrix=(s.matrix - center) / scale) for s in samples]


def standardize(train_samples, *others):
    """Z-score every feature with training statistics; constant features pass through.

    Returns ``(train, [others...], standardizer)``.
    """
    st = Standardizer.fit(train_samples)
    return st.transform(train_samples), [st.transform(o) for o in others], st


def build_scenario_datasets(records, config: ScenarioConfig) -> list[ScenarioDataset]:
    """One dataset per stage combination, balanced as the scenario requires.

    S1/S2 keep all infected plants plus as many mean-matched healthy ones.
    S3/S4 with ``pre_split`` scope oversample infected to the healthy count
    before any split; with ``train_only`` they stay unbalanced here and are
    oversampled inside the training partition by :func:`run_scenario`.
    """
    real = [r for r in records if not r.synthetic]
    available = {r.gdd_stage for r in real}
    missing = [s for s in config.stages if s not in available]
    if missing:
        raise DataError(f"records lack requested stages {missing}")
    out = []
    for ci, combo in enumerate(config.combinations()):
        samples = to_sequences(real, combo)
        if config.augmentation == "None":
            samples = balance_by_mean_match(samples)
            out.append(ScenarioDataset(combo, samples))
        elif config.smote_scope == "pre_split":
            seed = _derived_seed(config.seed, 17, SCENARIOS.index(config.id), ci)
            samples = balance_by_smote(samples, config.k, seed, per_stage=config.smote_per_stage)
            out.append(ScenarioDataset(combo, samples, pre_split_augmented=True))
        else:
            out.append(ScenarioDataset(combo, samples))
    return out


def run_dataset(dataset: ScenarioDataset, config: ScenarioConfig, model_config: lstm.ModelConfig,
                train_config: lstm.TrainConfig, combo_index: int = 0) -> ScenarioRun:
    assignment = split(dataset.samples, train_config.split, config.seed)
    parts = partition(dataset.samples, assignment)
    train_set, val_set, test_set = parts["train"], parts["val"], parts["test"]
    if config.standardize:
        train_set, (val_set, test_set), _ = standardize(train_set, val_set, test_set)
    if config.augmentation == "SMOTE" and config.smote_scope == "train_only":
        seed = _derived_seed(config.seed, 17, SCENARIOS.index(config.id), combo_index)
        train_set = balance_by_smote(train_set, config.k, seed, per_stage=config.smote_per_stage)
    tc = replace(train_config, seed=_derived_seed(config.seed, 29, SCENARIOS.index(config.id), combo_index))
    params, history = lstm.train(train_set, model_config, tc, val_set)
    preds, probs = lstm.predict(params, test_set)
    labels = np.array([s.y for s in test_set])
    cm = confusion(preds, labels, positive=1)
    report = per_class_report(
        cm, config.id, dataset.stages, config.augmentation,
        scope=config.smote_scope if config.augmentation == "SMOTE" else "",
        extra={"n_train": len(train_set), "n_val": len(val_set), "n_test": len(test_set)},
    )
    return ScenarioRun(
        report, history, [s.plant_id for s in test_set], labels, probs, [s.synthetic for s in test_set],
        {"train": len(train_set), "val": len(val_set), "test": len(test_set)},
    )


def run_scenario(records, config: ScenarioConfig, model_config: lstm.ModelConfig = lstm.ModelConfig(),
                 train_config: lstm.TrainConfig = lstm.TrainConfig(), combos=None) -> list[ScenarioRun]:
    """Split, standardize, augment, train and evaluate every stage combination.

    ``combos`` optionally restricts the run to the given combination indices.
    """
    datasets = build_scenario_datasets(records, config)
    runs = []
    for ci, ds in enumerate(datasets):
        if combos is not None and ci not in combos:
            continue
        runs.append(run_dataset(ds, config, model_config, train_config, ci))
    return runs


def write_plot_data(runs, out_dir) -> None:
    """Files for loss curves, probability KDEs, confusion matrices and accuracy bars."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "accuracy_bars.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["scenario", "stages", "augmentation", "accuracy"])
        for run in runs:
            r = run.report.row()
            wr.writerow([r["scenario"], r["stages"], r["augmentation"], f"{r['accuracy']:.2f}"])
    with open(out / "history.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["scenario", "stages", "epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        for run in runs:
            r = run.report.row()
            for row in run.history.rows():
                wr.writerow([r["scenario"], r["stages"], row[0], *(repr(float(v)) for v in row[1:])])
    with open(out / "probabilities.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["scenario", "stages", "plant_id", "label", "synthetic", "probability"])
        for run in runs:
            r = run.report.row()
            for pid, y, p, syn in zip(run.test_ids, run.test_labels, run.test_probs, run.test_synthetic):
                wr.writerow([r["scenario"], r["stages"], pid, "infected" if y else "healthy",
                             "true" if syn else "false", repr(float(p))])
    conf = [
        {"scenario": run.report.scenario, "stages": run.report.row()["stages"],
         "tp": run.report.cm.tp, "fp": run.report.cm.fp, "tn": run.report.cm.tn, "fn": run.report.cm.fn}
        for run in runs
    ]
    (out / "confusion.json").write_text(json.dumps(conf, indent=2) + "\n", encoding="utf-8")
