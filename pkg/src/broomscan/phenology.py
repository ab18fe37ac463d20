"""Growing degree days and growth-stage scheduling."""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass

import numpy as np

from .errors import DataError

DEFAULT_TBASE = 10.0
DEFAULT_TARGETS = (324.0, 574.0, 897.0, 1195.0, 1556.0)


@dataclass(frozen=True)
class DailyWeather:
    date: dt.date
    tmin: float
    tmax: float

    def __post_init__(self):
        if self.tmin > self.tmax:
            raise DataError(f"{self.date}: tmin {self.tmin} exceeds tmax {self.tmax}")


@dataclass(frozen=True)
class GddSeries:
    dates: tuple
    cumulative: np.ndarray

    @property
    def start_date(self) -> dt.date:
        return self.dates[0]


def daily_gdd(tmin: float, tmax: float, tbase: float = DEFAULT_TBASE) -> float:
    """Daily thermal time, floored at zero.

    The daily mean is not clamped to the base temperature per extreme;
    only the resulting daily value is floored.
    """
    if tmin > tmax:
        raise DataError(f"tmin {tmin} exceeds tmax {tmax}")
    return max(0.0, (tmax + tmin) / 2.0 - tbase)


def accumulate(weather, tbase: float = DEFAULT_TBASE) -> GddSeries:
    weather = list(weather)
    if not weather:
        raise DataError("weather series is empty")
    for prev, cur in zip(weather, weather[1:]):
        if cur.date <= prev.date:
            raise DataError(f"weather dates must strictly increase ({prev.date} then {cur.date})")
    daily = np.array([daily_gdd(w.tmin, w.tmax, tbase) for w in weather])
    return GddSeries(tuple(w.date for w in weather), np.cumsum(daily))


def stage_dates(series: GddSeries, targets=DEFAULT_TARGETS) -> dict:
    """First date on which cumulative GDD reaches each target; None if never."""
    targets = [float(t) for t in targets]
    if any(t <= 0 for t in targets) or any(b < a for a, b in zip(targets, targets[1:])):
        raise DataError(f"targets must be positive and ascending: {targets}")
    idx = np.searchsorted(series.cumulative, targets, side="left")
    return {t: (series.dates[i] if i < len(series.dates) else None) for t, i in zip(targets, idx)}


def read_weather(path) -> list[DailyWeather]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(r for r in fh if not r.startswith("#")))
    except OSError as exc:
        raise DataError(f"cannot read weather file {path}: {exc}") from exc
    out = []
    for row in rows:
        try:
            out.append(DailyWeather(dt.date.fromisoformat(row["date"]), float(row["tmin"]), float(row["tmax"])))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"{path}: malformed weather row {row}: {exc}") from exc
    return out


def write_weather(weather, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["date", "tmin", "tmax"])
        for w in weather:
            wr.writerow([w.date.isoformat(), repr(float(w.tmin)), repr(float(w.tmax))])
