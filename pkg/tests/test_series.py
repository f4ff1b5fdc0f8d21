from datetime import datetime, timezone

import numpy as np
import pytest

from surgescan.series import (
    BASELINE_FLOOR,
    ForecastSeries,
    SensorSeries,
    day_of_week,
    hour_to_iso,
    iso_to_hour,
)


def test_iso_round_trip():
    for hour in (0, 123_456, 440_000):
        assert iso_to_hour(hour_to_iso(hour)) == hour
    assert iso_to_hour("2020-04-01T00:00:00Z") == iso_to_hour("2020-04-01T00:00:00+00:00")
    assert hour_to_iso(iso_to_hour("2020-04-01T05:00:00Z")) == "2020-04-01T05:00:00Z"


def test_iso_rejects_unaligned():
    with pytest.raises(ValueError):
        iso_to_hour("2020-04-01T00:30:00Z")


def test_day_of_week_matches_datetime():
    hours = np.array([0, 5, 24, 1000, 440_000])
    expected = [
        datetime.fromtimestamp(int(h) * 3600, tz=timezone.utc).weekday() for h in hours
    ]
    assert day_of_week(hours).tolist() == expected


def test_sensor_series_validation():
    with pytest.raises(ValueError):
        SensorSeries("s", np.array([3, 2, 1]), np.array([1, 1, 1]))
    with pytest.raises(ValueError):
        SensorSeries("s", np.array([1, 2]), np.array([1, -1]))
    series = SensorSeries("s", np.array([5, 6, 9]), np.array([1, 2, 3]))
    assert not series.is_hourly
    assert series.window(6, 9).counts.tolist() == [2, 3]
    assert not series.covers(5, 9)
    assert series.covers(5, 6)


def test_forecast_series_invariants():
    ts = np.arange(4)
    fc = ForecastSeries.from_moments("s", ts, [5.0, 0.0, 2.0, 1.0], [1.0, 0.5, 0.0, 2.0])
    assert np.all(fc.lower <= fc.mean)
    assert np.all(fc.mean <= fc.upper)
    assert np.all(fc.lower > 0)
    # zero mean is floored, and k=3 bands apply
    assert fc.mean[1] == BASELINE_FLOOR
    assert fc.upper[0] == pytest.approx(5.0 + 3.0)
    assert fc.lower[0] == pytest.approx(2.0)
    with pytest.raises(ValueError):
        ForecastSeries("s", ts, np.ones(4), np.zeros(4), np.zeros(4), np.ones(4))
