"""Confusion counts, recall/precision/F1/accuracy, and Table-2 style rows."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DataError

REPORT_COLUMNS = ("scenario", "stages", "augmentation", "P_b", "R_b", "F_b", "P_h", "R_h", "F_h", "accuracy")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise DataError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def swapped(self) -> "ConfusionMatrix":
        """The same predictions scored with the other class as positive."""
        return ConfusionMatrix(tp=self.tn, fp=self.fn, tn=self.tp, fn=self.fp)


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    undefined: tuple = ()


def confusion(predictions, labels, positive=1) -> ConfusionMatrix:
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise DataError(f"{p.size} predictions vs {y.size} labels")
    if p.size == 0:
        raise DataError("confusion of an empty set")
    pp = p == positive
    yp = y == positive
    return ConfusionMatrix(
        tp=int(np.sum(pp & yp)), fp=int(np.sum(pp & ~yp)), tn=int(np.sum(~pp & ~yp)), fn=int(np.sum(~pp & yp))
    )


def _ratio(num, den, name, undefined):
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Fractions in [0, 1]. A 0/0 metric is reported as 0 and named in ``undefined``."""
    if cm.total <= 0:
        raise DataError("metrics of an empty confusion matrix")
    undefined = []
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall", undefined)
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision", undefined)
    f1 = _ratio(2 * precision * recall, precision + recall, "f1", undefined)
    accuracy = (cm.tp + cm.tn) / cm.total
    return Metrics(precision, recall, f1, accuracy, tuple(undefined))


def pct(x: float) -> float:
    return round(100.0 * x, 2)


@dataclass
class ScenarioReport:
    scenario: str
    stages: tuple
    augmentation: str
    broomrape: Metrics
    healthy: Metrics
    accuracy: float
    cm: ConfusionMatrix
    scope: str = ""
    extra: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {
            "scenario": self.scenario,
            "stages": ", ".join(f"{s:g}" for s in self.stages),
            "augmentation": self.augmentation,
            "P_b": pct(self.broomrape.precision),
            "R_b": pct(self.broomrape.recall),
            "F_b": pct(self.broomrape.f1),
            "P_h": pct(self.healthy.precision),
            "R_h": pct(self.healthy.recall),
            "F_h": pct(self.healthy.f1),
            "accuracy": pct(self.accuracy),
        }

    def to_json(self) -> dict:
        d = self.row()
        d.update(
            scope=self.scope,
            confusion=asdict(self.cm),
            undefined={"broomrape": list(self.broomrape.undefined), "healthy": list(self.healthy.undefined)},
        )
        d.update(self.extra)
        return d


def per_class_report(cm: ConfusionMatrix, scenario="", stages=(), augmentation="None", scope="", extra=None) -> ScenarioReport:
    """Broomrape metrics from ``cm``; healthy metrics from the class-swapped matrix."""
    b = metrics(cm)
    h = metrics(cm.swapped())
    return ScenarioReport(scenario, tuple(stages), augmentation, b, h, b.accuracy, cm, scope, dict(extra or {}))


def write_report_csv(reports, path, header_lines=()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        wr = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        wr.writeheader()
        for r in reports:
            row = r.row()
            wr.writerow({k: (f"{v:.2f}" if isinstance(v, float) else v) for k, v in row.items()})


def write_report_json(reports, path, meta=None) -> None:
    doc = {"meta": meta or {}, "rows": [r.to_json() for r in reports]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report_csv(path):
    """Returns ``(header_lines, rows)``."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataError(f"cannot read report {path}: {exc}") from exc
    header = [ln[2:].rstrip("\n") for ln in lines if ln.startswith("#")]
    rows = list(csv.DictReader(ln for ln in lines if not ln.startswith("#")))
    missing = [c for c in REPORT_COLUMNS if rows and c not in rows[0]]
    if missing:
        raise DataError(f"{path}: report lacks columns {missing}")
    return header, rows


def render_table(rows) -> str:
    """Aligned plain-text table of report rows."""
    cols = list(REPORT_COLUMNS)
    cells = [cols] + [[str(r[c]) for c in cols] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
    lines = []
    for k, row in enumerate(cells):
        lines.append("  ".join(v.ljust(w) if i < 3 else v.rjust(w) for i, (v, w) in enumerate(zip(row, widths))))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
