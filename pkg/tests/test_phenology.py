import datetime as dt

import numpy as np
import pytest

from broomscan.errors import DataError
from broomscan.phenology import (
    DEFAULT_TARGETS, DailyWeather, accumulate, daily_gdd, read_weather, stage_dates, write_weather,
)

D0 = dt.date(2023, 4, 20)


def _days(pairs):
    return [DailyWeather(D0 + dt.timedelta(days=i), lo, hi) for i, (hi, lo) in enumerate(pairs)]


def _scan_oracle(cumulative, dates, targets):
    out = {}
    for t in targets:
        out[t] = None
        for d, v in zip(dates, cumulative):
            if v >= t:
                out[t] = d
                break
    return out


def test_daily_examples():
    assert daily_gdd(20, 30, 10) == 15
    assert daily_gdd(6, 12, 10) == 0
    assert daily_gdd(14.5, 25.5, 10) == 10
    with pytest.raises(DataError):
        daily_gdd(30, 20)


def test_accumulate_examples():
    np.testing.assert_array_equal(accumulate(_days([(30, 20)])).cumulative, [15])
    np.testing.assert_array_equal(accumulate(_days([(30, 20)] * 3)).cumulative, [15, 30, 45])


def test_accumulate_prefix_sum_oracle(rng):
    hi = rng.uniform(10, 40, 120)
    lo = hi - rng.uniform(0, 15, 120)
    s = accumulate(_days(zip(hi, lo)))
    running, oracle = 0.0, []
    for h, l in zip(hi, lo):
        running += max(0.0, (h + l) / 2 - 10)
        oracle.append(running)
    np.testing.assert_allclose(s.cumulative, oracle, rtol=1e-12)
    assert np.all(np.diff(s.cumulative) >= 0)


def test_dates_must_increase():
    w = _days([(30, 20)] * 2)
    with pytest.raises(DataError):
        accumulate([w[1], w[0]])
    with pytest.raises(DataError):
        accumulate([])


def test_stage_date_examples():
    s = accumulate(_days([(30, 20)] * 3))
    assert stage_dates(s, [30])[30.0] == D0 + dt.timedelta(days=1)
    assert stage_dates(s, [46])[46.0] is None


def test_constant_season_crosses_324_on_day_22():
    s = accumulate(_days([(30, 20)] * 150))
    assert stage_dates(s, [324])[324.0] == D0 + dt.timedelta(days=21)


def test_random_seasons_match_linear_scan(rng):
    for _ in range(100):
        hi = rng.uniform(15, 40, 150)
        lo = hi - rng.uniform(0, 15, 150)
        s = accumulate(_days(zip(hi, lo)))
        assert stage_dates(s, DEFAULT_TARGETS) == _scan_oracle(s.cumulative, s.dates, DEFAULT_TARGETS)


def test_weather_csv_round_trip(tmp_path):
    w = _days([(30.5, 20.25), (28.0, 11.0)])
    write_weather(w, tmp_path / "w.csv")
    assert read_weather(tmp_path / "w.csv") == w
