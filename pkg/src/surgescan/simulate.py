"""Semi-synthetic surge benchmark data: generation, injection, calibration.

Surge-free sensors follow a sinusoidal daily/weekly mean profile with Poisson
noise. A surge multiplies the final days' means by a linear-in-time factor
(capped) for the sensors nearest a random epicentre, then redraws the counts,
so surged data stays Poisson. All randomness derives from a single seed with
per-sensor substreams, making every output a pure function of (config, seed)
independent of iteration order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import CalibrationError, InputError
from .forecast import ForecastSettings, make_forecasts
from .metrics import NullDistribution, nearest_rank
from .network import RoadNetwork, SensorPlacement
from .scan import ScanRegion, ScanResult, scan
from .series import HOURS_PER_DAY, HOURS_PER_WEEK, SensorSeries, iso_to_hour

logger = logging.getLogger(__name__)

# Substream tags for per-sensor seed derivation.
_TAG_BASE = 0
_TAG_SURGE = 1

DEFAULT_START = iso_to_hour("2020-04-01T00:00:00Z")


@dataclass(frozen=True)
class SimConfig:
    """Knobs for surge-free data generation."""

    days_total: int = 122
    train_days: int = 21
    daily_amplitude: float = 0.5
    weekly_amplitude: float = 0.2
    base_min: float = 5.0
    base_max: float = 100.0
    amplitude_percentile: float = 90.0
    mean_floor: float = 0.1
    start_hour: int = DEFAULT_START
    seed: int = 0

    def __post_init__(self):
        if self.days_total <= self.train_days:
            raise ValueError("days_total must exceed train_days")
        for name in ("daily_amplitude", "weekly_amplitude"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be within [0, 1]")
        if not 0 < self.base_min <= self.base_max:
            raise ValueError("require 0 < base_min <= base_max")
        if self.mean_floor <= 0:
            raise ValueError("mean_floor must be positive")

    @property
    def hours_total(self) -> int:
        return self.days_total * HOURS_PER_DAY


@dataclass(frozen=True)
class SurgeFreeData:
    """Generated series plus the mean profiles they were drawn from."""

    config: SimConfig
    sensors: tuple[SensorPlacement, ...]
    series: Mapping[str, SensorSeries]
    means: Mapping[str, np.ndarray]
    bases: Mapping[str, float]

    @property
    def timestamps(self) -> np.ndarray:
        return np.arange(self.config.start_hour,
                         self.config.start_hour + self.config.hours_total, dtype=np.int64)


def _sensor_rng(seed: int, index: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index, tag]))


def generate_surge_free(
    sensors: Sequence[SensorPlacement],
    config: SimConfig,
    empirical: Mapping[str, np.ndarray] | None = None,
) -> SurgeFreeData:
    """Draw surge-free hourly counts for every sensor.

    Base rates come from the configured percentile of the empirical counts
    when supplied, otherwise log-uniform in [base_min, base_max]. Phases are
    fixed per sensor by the seed, so the same seed is bit-reproducible.
    """
    hours = np.arange(config.hours_total, dtype=np.float64)
    order = sorted(s.sensor_id for s in sensors)
    if len(set(order)) != len(order):
        raise InputError("duplicate sensor ids")
    sensor_by_id = {s.sensor_id: s for s in sensors}
    timestamps = np.arange(config.start_hour, config.start_hour + config.hours_total,
                           dtype=np.int64)
    series: dict[str, SensorSeries] = {}
    means: dict[str, np.ndarray] = {}
    bases: dict[str, float] = {}
    for index, sensor_id in enumerate(order):
        rng = _sensor_rng(config.seed, index, _TAG_BASE)
        if empirical is not None:
            if sensor_id not in empirical:
                raise InputError(f"no empirical amplitudes for sensor {sensor_id}")
            base = nearest_rank(empirical[sensor_id], config.amplitude_percentile)
        else:
            base = float(np.exp(rng.uniform(np.log(config.base_min),
                                            np.log(config.base_max))))
        phase_daily = float(rng.uniform(0.0, 2.0 * np.pi))
        phase_weekly = float(rng.uniform(0.0, 2.0 * np.pi))
        profile = (
            base
            * (1.0 + config.daily_amplitude * np.sin(2.0 * np.pi * hours / HOURS_PER_DAY + phase_daily))
            * (1.0 + config.weekly_amplitude * np.sin(2.0 * np.pi * hours / HOURS_PER_WEEK + phase_weekly))
        )
        profile = np.maximum(profile, config.mean_floor)
        counts = rng.poisson(profile)
        series[sensor_id] = SensorSeries(sensor_id, timestamps, counts)
        means[sensor_id] = profile
        bases[sensor_id] = base
    ordered_sensors = tuple(sensor_by_id[sid] for sid in order)
    return SurgeFreeData(config, ordered_sensors, series, means, bases)


@dataclass(frozen=True)
class SurgeSpec:
    """An epicentre-based linear surge over the final days."""

    epicentre: tuple[float, float]
    k: int
    surge_days: int = 3
    lambda_cap: float = 4.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.surge_days < 1:
            raise ValueError("surge_days must be >= 1")
        if self.lambda_cap < 1.0:
            raise ValueError("lambda_cap must be >= 1")


def draw_surge_spec(
    rng: np.random.Generator,
    bbox: tuple[float, float, float, float],
    k_min: int = 10,
    k_max: int = 100,
    surge_days: int = 3,
    lambda_cap: float = 4.0,
    contains: Callable[[float, float], bool] | None = None,
) -> SurgeSpec:
    """Epicentre uniform over the boundary (bbox with polygon rejection), k uniform."""
    min_lon, min_lat, max_lon, max_lat = bbox
    for _ in range(100_000):
        lon = float(rng.uniform(min_lon, max_lon))
        lat = float(rng.uniform(min_lat, max_lat))
        if contains is None or contains(lon, lat):
            k = int(rng.integers(k_min, k_max + 1))
            return SurgeSpec((lon, lat), k, surge_days, lambda_cap)
    raise InputError("could not sample an epicentre inside the boundary polygon")


@dataclass(frozen=True)
class SurgeOutcome:
    """Surged series plus the ground truth of the injection."""

    series: Mapping[str, SensorSeries]
    affected: tuple[str, ...]
    omegas: Mapping[str, float]
    spec: SurgeSpec


def inject_surge(data: SurgeFreeData, spec: SurgeSpec) -> SurgeOutcome:
    """Redraw the k nearest sensors' final days under the surge factor.

    The per-sensor rate is proportional to busyness, normalized so the
    busiest affected sensor reaches the cap on the final surge day; the
    factor applies to whole outbreak days. Unaffected sensors (and all
    earlier hours) are byte-identical to the surge-free data.
    """
    config = data.config
    surge_hours = spec.surge_days * HOURS_PER_DAY
    if surge_hours > config.hours_total:
        raise InputError("surge does not fit inside the generated data")
    k = spec.k
    if k > len(data.sensors):
        logger.warning("inject_surge: k=%d exceeds %d sensors; clamping",
                       k, len(data.sensors))
        k = len(data.sensors)
    lon0, lat0 = spec.epicentre
    ranked = sorted(
        data.sensors,
        key=lambda s: (math.hypot(s.lon - lon0, s.lat - lat0), s.sensor_id),
    )
    affected = tuple(sorted(s.sensor_id for s in ranked[:k]))
    max_base = max(data.bases[sid] for sid in affected)
    omegas = {
        sid: (data.bases[sid] / max_base if max_base > 0 else 0.0) for sid in affected
    }
    day_factors = np.minimum(
        1.0 + np.outer(np.array([omegas[sid] for sid in affected]),
                       np.arange(1, spec.surge_days + 1)),
        spec.lambda_cap,
    )

    order = sorted(s.sensor_id for s in data.sensors)
    new_series = dict(data.series)
    for row, sid in enumerate(affected):
        index = order.index(sid)
        rng = _sensor_rng(config.seed, index, _TAG_SURGE)
        factors = np.repeat(day_factors[row], HOURS_PER_DAY)
        base_series = data.series[sid]
        means_tail = data.means[sid][-surge_hours:] * factors
        counts = base_series.counts.copy()
        counts[-surge_hours:] = rng.poisson(means_tail)
        new_series[sid] = SensorSeries(sid, base_series.timestamps, counts)
    return SurgeOutcome(new_series, affected, omegas, spec)


@dataclass(frozen=True)
class ScanSetup:
    """A named region family with its scoring options."""

    scan_type: str
    regions: tuple[ScanRegion, ...]
    metric: str = "ebp"
    bound_mode: str = "mean"
    max_window_hours: int = 48

    def run(self, forecasts, actuals) -> ScanResult:
        return scan(
            self.regions,
            forecasts,
            actuals,
            metric=self.metric,
            bound_mode=self.bound_mode,
            max_window_hours=self.max_window_hours,
        )


def calibrate_null(
    data: SurgeFreeData,
    setups: Sequence[ScanSetup],
    settings: ForecastSettings,
    n_days: int = 101,
    threads: int = 1,
) -> dict[str, NullDistribution]:
    """Empirical null of daily maximum scores on surge-free data.

    For each of the last ``n_days`` days the full forecast+scan pipeline runs
    with windows ending at that day's final hour; one failed day aborts the
    calibration (a partial null is misleading). Setups share each day's
    forecasts, so calibrating several scan types costs one forecast pass.
    """
    config = data.config
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    if n_days > config.days_total - config.train_days:
        raise CalibrationError(
            f"{n_days} calibration days need more than "
            f"{config.days_total} total days with {config.train_days} training days"
        )
    samples: dict[str, list[float]] = {s.scan_type: [] for s in setups}
    first_day = config.days_total - n_days + 1
    for day in range(first_day, config.days_total + 1):
        t_end = config.start_hour + day * HOURS_PER_DAY - 1
        forecast_start = t_end - settings.horizon_hours + 1
        forecasts = make_forecasts(data.series, forecast_start, settings, threads=threads)
        if len(forecasts) != len(data.sensors):
            raise CalibrationError(
                f"day {day}: forecasts available for only "
                f"{len(forecasts)}/{len(data.sensors)} sensors"
            )
        for setup in setups:
            result = setup.run(forecasts, data.series)
            if result.is_empty:
                raise CalibrationError(f"day {day}: {setup.scan_type} scan scored no regions")
            samples[setup.scan_type].append(result.max_raw())
    return {
        setup.scan_type: NullDistribution(
            setup.scan_type, setup.metric, np.array(samples[setup.scan_type])
        )
        for setup in setups
    }


# ---------------------------------------------------------------------------
# Synthetic fixtures for benchmarks and demos.


def block_network(
    cols: int,
    rows: int,
    block_len_m: float = 300.0,
    origin: tuple[float, float] = (-0.15, 51.5),
) -> RoadNetwork:
    """A rectangular street lattice with cols x rows intersections."""
    lon0, lat0 = origin
    metres_per_deg_lat = math.pi / 180.0 * 6_371_000.0
    dlat = block_len_m / metres_per_deg_lat
    dlon = block_len_m / (metres_per_deg_lat * math.cos(math.radians(lat0)))

    def node(i: int, j: int) -> tuple[float, float]:
        return (lon0 + i * dlon, lat0 + j * dlat)

    edges = []
    for j in range(rows):
        for i in range(cols - 1):
            flon, flat = node(i, j)
            tlon, tlat = node(i + 1, j)
            edges.append((f"h{i}.{j}", flon, flat, tlon, tlat, block_len_m))
    for j in range(rows - 1):
        for i in range(cols):
            flon, flat = node(i, j)
            tlon, tlat = node(i, j + 1)
            edges.append((f"v{i}.{j}", flon, flat, tlon, tlat, block_len_m))
    return RoadNetwork.from_edge_rows(edges)


def sensors_on_network(network: RoadNetwork, n: int, seed: int) -> list[SensorPlacement]:
    """Sensors at random positions along the network's edges."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 17]))
    lengths = np.array([e.length_m for e in network.edges])
    weights = lengths / lengths.sum()
    out = []
    for i in range(n):
        edge = network.edges[int(rng.choice(len(network.edges), p=weights))]
        frac = float(rng.uniform(0.0, 1.0))
        (x1, y1), (x2, y2) = edge.geometry[0], edge.geometry[-1]
        out.append(
            SensorPlacement(
                sensor_id=f"s{i:04d}",
                lon=x1 + frac * (x2 - x1),
                lat=y1 + frac * (y2 - y1),
            )
        )
    return out


def random_sensors_in_box(
    bbox: tuple[float, float, float, float], n: int, seed: int
) -> list[SensorPlacement]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 23]))
    min_lon, min_lat, max_lon, max_lat = bbox
    return [
        SensorPlacement(
            sensor_id=f"s{i:04d}",
            lon=float(rng.uniform(min_lon, max_lon)),
            lat=float(rng.uniform(min_lat, max_lat)),
        )
        for i in range(n)
    ]
