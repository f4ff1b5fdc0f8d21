"""Hourly count series, forecast containers and the integer-hour time grid.

All timestamps in the package are integer hours since the Unix epoch (UTC).
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

# Floor applied to forecast means and lower bounds: region baselines must stay
# strictly positive for the likelihood metrics.
BASELINE_FLOOR = 1e-6

HOURS_PER_DAY = 24
HOURS_PER_WEEK = 168


def iso_to_hour(text: str) -> int:
    """Parse an ISO-8601 UTC timestamp into epoch hours.

    Accepts a trailing ``Z`` or ``+00:00`` offset; the instant must fall on
    an exact hour.
    """
    raw = text.strip()
    if raw.endswith("Z"):
        raw = raw[:-1]
    dt = datetime.fromisoformat(raw)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    seconds = dt.timestamp()
    if seconds % 3600 or dt.minute or dt.second or dt.microsecond:
        raise ValueError(f"timestamp {text!r} is not hour-aligned")
    return int(seconds) // 3600


def hour_to_iso(hour: int) -> str:
    """Format epoch hours as an ISO-8601 UTC timestamp with a Z suffix."""
    dt = datetime.fromtimestamp(int(hour) * 3600, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def day_of_week(hours):
    """Weekday index (Monday=0) for epoch hours; vectorized."""
    days = np.asarray(hours, dtype=np.int64) // HOURS_PER_DAY
    # The epoch day (1970-01-01) was a Thursday.
    return (days + 3) % 7


@dataclass(frozen=True)
class SensorSeries:
    """One sensor's hourly counts at a fixed planar location.

    Timestamps are strictly increasing epoch hours; counts are non-negative
    integers. Gaps are permitted before preprocessing only.
    """

    sensor_id: str
    timestamps: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if ts.shape != counts.shape or ts.ndim != 1:
            raise ValueError("timestamps and counts must be 1-d and equal length")
        if ts.size and np.any(np.diff(ts) <= 0):
            raise ValueError(f"sensor {self.sensor_id}: timestamps not strictly increasing")
        if np.any(counts < 0):
            raise ValueError(f"sensor {self.sensor_id}: negative counts")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "counts", counts)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    @property
    def is_hourly(self) -> bool:
        """True when the series has unit gaps throughout."""
        return self.timestamps.size < 2 or bool(np.all(np.diff(self.timestamps) == 1))

    def day_of_week(self) -> np.ndarray:
        return day_of_week(self.timestamps)

    def window(self, t_start: int, t_end: int) -> "SensorSeries":
        """Sub-series on the inclusive hour window [t_start, t_end]."""
        mask = (self.timestamps >= t_start) & (self.timestamps <= t_end)
        return SensorSeries(self.sensor_id, self.timestamps[mask], self.counts[mask])

    def covers(self, t_start: int, t_end: int) -> bool:
        """True when every hour of [t_start, t_end] is present."""
        sub = self.window(t_start, t_end)
        return len(sub) == t_end - t_start + 1


@dataclass(frozen=True)
class ForecastSeries:
    """Per-sensor baseline mean with k-sigma upper/lower bounds."""

    sensor_id: str
    timestamps: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        arrays = {}
        for name in ("mean", "std", "lower", "upper"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != ts.shape:
                raise ValueError(f"forecast field {name} length mismatch")
            arrays[name] = arr
        if ts.size and np.any(np.diff(ts) != 1):
            raise ValueError(f"sensor {self.sensor_id}: forecast hours must be contiguous")
        if np.any(arrays["lower"] <= 0):
            raise ValueError(f"sensor {self.sensor_id}: lower bound must be positive")
        if np.any(arrays["lower"] > arrays["mean"]) or np.any(arrays["mean"] > arrays["upper"]):
            raise ValueError(f"sensor {self.sensor_id}: bounds must satisfy lower <= mean <= upper")
        object.__setattr__(self, "timestamps", ts)
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    @classmethod
    def from_moments(cls, sensor_id, timestamps, mean, std, sigma_k: float = 3.0) -> "ForecastSeries":
        """Build a forecast from (mean, std), applying the k-sigma bounds.

        Means are floored at ``BASELINE_FLOOR`` and the lower bound is
        clamped to stay positive.
        """
        mean = np.maximum(np.asarray(mean, dtype=np.float64), BASELINE_FLOOR)
        std = np.asarray(std, dtype=np.float64)
        if np.any(std < 0):
            raise ValueError("negative forecast std")
        lower = np.maximum(mean - sigma_k * std, BASELINE_FLOOR)
        upper = mean + sigma_k * std
        return cls(sensor_id, timestamps, mean, std, lower, upper)
