"""Baseline forecasting: series preprocessing and Holt-Winters smoothing.

The Holt-Winters recursion tracks a smoothed level, a trend and a 24-hour
multiplicative seasonal profile:

    X_t = alpha * c_t / Z_{t-24} + (1 - alpha) * (X_{t-1} + Y_{t-1})
    Y_t = beta * (X_t - X_{t-1}) + (1 - beta) * Y_{t-1}
    Z_t = gamma * c_t / X_t + (1 - gamma) * Z_{t-24}

with the one-step baseline  b_t = (X_{t-1} + Y_{t-1}) * Z_{t-24}.
Weekly structure is handled by a per-weekday multiplicative adjustment
applied before fitting and inverted after forecasting.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InputError, PreprocessError
from .metrics import nearest_rank
from .series import BASELINE_FLOOR, HOURS_PER_DAY, ForecastSeries, SensorSeries, day_of_week

logger = logging.getLogger(__name__)

PERIOD = HOURS_PER_DAY
# Smoothing parameters live in the open unit interval.
PARAM_LO, PARAM_HI = 1e-3, 1.0 - 1e-3
_TINY = 1e-12
# Multiplicative seasonality is undefined at zero counts: a zero in the
# initial period would zero a seasonal index forever and let the level update
# divide by (nearly) nothing. Clipping the seasonal ring and flooring the
# level keeps the recursion stable on sparse hours.
SEASONAL_MIN, SEASONAL_MAX = 0.01, 100.0
LEVEL_FLOOR = 1e-6

DEFAULT_MAX_GAP_HOURS = 6
DEFAULT_MIN_COVERAGE = 0.8
ANOMALY_FACTOR = 5.0


def preprocess(
    series: SensorSeries,
    max_gap_hours: int = DEFAULT_MAX_GAP_HOURS,
    min_coverage: float = DEFAULT_MIN_COVERAGE,
) -> SensorSeries:
    """Fill small gaps and strip gross anomalies from a raw series.

    Values beyond five times the series' 99th percentile are treated as
    missing, every missing hour is linearly interpolated (rounded to the
    nearest count), and the result covers the full hour range of the input.

    Raises:
        PreprocessError: naming the failed criterion, when the series is
            empty, has coverage below ``min_coverage``, or contains a gap
            longer than ``max_gap_hours``.
    """
    if len(series) == 0:
        raise PreprocessError(series.sensor_id, "empty")
    ts, counts = series.timestamps, series.counts
    span = int(ts[-1] - ts[0] + 1)
    coverage = len(series) / span
    if coverage < min_coverage:
        raise PreprocessError(
            series.sensor_id, "coverage", f"{coverage:.3f} < {min_coverage}"
        )
    p99 = nearest_rank(counts, 99.0)
    keep = np.ones(len(series), dtype=bool)
    if p99 > 0:
        keep = counts <= ANOMALY_FACTOR * p99
        dropped = int((~keep).sum())
        if dropped:
            logger.info("preprocess: sensor %s: %d anomalous values removed",
                        series.sensor_id, dropped)
    full = np.arange(ts[0], ts[-1] + 1, dtype=np.int64)
    present = np.zeros(span, dtype=bool)
    present[ts[keep] - ts[0]] = True
    gap = _longest_gap(present)
    if gap > max_gap_hours:
        raise PreprocessError(
            series.sensor_id, "max_gap", f"gap of {gap}h exceeds {max_gap_hours}h"
        )
    filled = np.interp(full, ts[keep], counts[keep].astype(np.float64))
    return SensorSeries(series.sensor_id, full, np.rint(filled).astype(np.int64))


def _longest_gap(present: np.ndarray) -> int:
    longest = run = 0
    for flag in present:
        run = 0 if flag else run + 1
        longest = max(longest, run)
    return longest


def weekday_factors(series: SensorSeries) -> np.ndarray:
    """Multiplicative day-of-week factors (weekday mean over overall mean)."""
    counts = series.counts.astype(np.float64)
    overall = counts.mean() if counts.size else 0.0
    factors = np.ones(7)
    if overall <= 0:
        return factors
    dows = series.day_of_week()
    for d in range(7):
        mask = dows == d
        if mask.any():
            f = counts[mask].mean() / overall
            if f > _TINY:
                factors[d] = f
    return factors


@dataclass(frozen=True)
class HwParams:
    """Fitted Holt-Winters smoothing parameters and initial state."""

    alpha: float
    beta: float
    gamma: float
    level0: float
    trend0: float
    seasonal0: np.ndarray
    fallback_constant: bool = False

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name}={v} outside (0, 1)")
        seasonal = np.asarray(self.seasonal0, dtype=np.float64)
        if seasonal.shape != (PERIOD,):
            raise ValueError(f"seasonal state must have length {PERIOD}")
        object.__setattr__(self, "seasonal0", seasonal)


@dataclass
class HwFilterResult:
    """State after running the recursion over a stretch of observations."""

    level: float
    trend: float
    seasonal: np.ndarray  # ring buffer; entry i is the latest Z for phase i
    n_consumed: int
    one_step: np.ndarray  # forecast issued just before each observation


def hw_filter(counts: np.ndarray, params: HwParams) -> HwFilterResult:
    """Run the recursion over ``counts`` starting from the params' initial state.

    Observation i uses seasonal phase ``i % 24``, so ``params.seasonal0[i]``
    plays the role of Z_{t-24} for the first 24 observations.
    """
    level, trend = params.level0, params.trend0
    ring = [float(v) for v in params.seasonal0]
    a, b, g = params.alpha, params.beta, params.gamma
    one_step = np.empty(len(counts))
    for i, c in enumerate(np.asarray(counts, dtype=np.float64).tolist()):
        phase = i % PERIOD
        z = ring[phase]
        prev = level + trend
        one_step[i] = prev * z
        new_level = max(a * (c / z) + (1.0 - a) * prev, LEVEL_FLOOR)
        trend = b * (new_level - level) + (1.0 - b) * trend
        ring[phase] = min(max(g * (c / new_level) + (1.0 - g) * z, SEASONAL_MIN),
                          SEASONAL_MAX)
        level = new_level
    return HwFilterResult(level, trend, np.array(ring), len(counts), one_step)


def hw_init_state(counts: np.ndarray) -> tuple[float, float, np.ndarray] | None:
    """Initial (level, trend, seasonal) from the first two 24h periods.

    Returns None when the first period's mean is zero (multiplicative
    seasonality is undefined there).
    """
    counts = np.asarray(counts, dtype=np.float64)
    first = counts[:PERIOD]
    second = counts[PERIOD : 2 * PERIOD]
    level0 = float(first.mean())
    if level0 <= 0:
        return None
    trend0 = float((second.mean() - level0) / PERIOD)
    seasonal0 = np.clip(first / level0, SEASONAL_MIN, SEASONAL_MAX)
    return level0, trend0, seasonal0


def _sse_grid(counts, alphas, betas, gammas, level0, trend0, seasonal0):
    """One-step-ahead SSE of the recursion for a batch of parameter triples."""
    n_combo = alphas.shape[0]
    level = np.full(n_combo, level0)
    trend = np.full(n_combo, trend0)
    ring = np.repeat(np.asarray(seasonal0, dtype=np.float64)[:, None], n_combo, axis=1)
    one_a, one_b, one_g = 1.0 - alphas, 1.0 - betas, 1.0 - gammas
    sse = np.zeros(n_combo)
    for i, c in enumerate(np.asarray(counts, dtype=np.float64)):
        z = ring[i % PERIOD]
        prev = level + trend
        err = prev * z - c
        sse += err * err
        new_level = np.maximum(alphas * (c / z) + one_a * prev, LEVEL_FLOOR)
        trend = betas * (new_level - level) + one_b * trend
        ring[i % PERIOD] = np.clip(gammas * (c / new_level) + one_g * z,
                                   SEASONAL_MIN, SEASONAL_MAX)
        level = new_level
    return sse


def _sse_scalar(counts, a, b, g, level0, trend0, seasonal0):
    level, trend = level0, trend0
    ring = list(seasonal0)
    sse = 0.0
    for i, c in enumerate(counts):
        phase = i % PERIOD
        z = ring[phase]
        prev = level + trend
        err = prev * z - c
        sse += err * err
        new_level = max(a * (c / z) + (1.0 - a) * prev, LEVEL_FLOOR)
        trend = b * (new_level - level) + (1.0 - b) * trend
        ring[phase] = min(max(g * (c / new_level) + (1.0 - g) * z, SEASONAL_MIN),
                          SEASONAL_MAX)
        level = new_level
    return sse


_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_min(fn, lo: float, hi: float, tol: float = 1e-4) -> float:
    """Golden-section minimum of a unimodal-ish scalar function on [lo, hi]."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fn(d)
    return (a + b) / 2.0


def fit_holt_winters(
    train: SensorSeries | np.ndarray,
    grid_step: float = 0.05,
    refine_tol: float = 1e-4,
) -> HwParams:
    """Fit alpha, beta, gamma by one-step-ahead squared error.

    A full grid at ``grid_step`` resolution is scanned first and the best
    point is refined one coordinate at a time by golden-section search.
    An all-zero training series falls back to a constant-floor baseline.
    """
    counts = train.counts if isinstance(train, SensorSeries) else np.asarray(train)
    counts = counts.astype(np.float64)
    if counts.size < 2 * PERIOD:
        raise InputError(
            f"Holt-Winters needs at least {2 * PERIOD} training hours, got {counts.size}"
        )
    init = hw_init_state(counts)
    if init is None:
        logger.warning("fit_holt_winters: first-period mean is zero; "
                       "falling back to a constant-floor baseline")
        return HwParams(0.5, 0.1, 0.1, 0.0, 0.0, np.ones(PERIOD), fallback_constant=True)
    level0, trend0, seasonal0 = init
    rec = counts[PERIOD:]

    values = np.arange(1, int(round(1.0 / grid_step))) * grid_step
    aa, bb, gg = (m.ravel() for m in np.meshgrid(values, values, values, indexing="ij"))
    sse = _sse_grid(rec, aa, bb, gg, level0, trend0, seasonal0)
    best = int(np.argmin(sse))
    current = [float(aa[best]), float(bb[best]), float(gg[best])]

    rec_list = rec.tolist()
    seasonal_list = seasonal0.tolist()
    for coord in range(3):
        lo = max(PARAM_LO, current[coord] - grid_step)
        hi = min(PARAM_HI, current[coord] + grid_step)

        def objective(x, coord=coord):
            trial = list(current)
            trial[coord] = x
            return _sse_scalar(rec_list, *trial, level0, trend0, seasonal_list)

        current[coord] = _golden_min(objective, lo, hi, refine_tol)

    alpha, beta, gamma = (min(max(v, PARAM_LO), PARAM_HI) for v in current)
    return HwParams(alpha, beta, gamma, level0, trend0, seasonal0)


def forecast_holt_winters(
    params: HwParams, train: SensorSeries | np.ndarray, horizon_hours: int
) -> np.ndarray:
    """Iterated multi-step baselines, feeding each forecast back as observed.

    Forecasts are floored at ``BASELINE_FLOOR`` (also before feedback, so a
    negative trend cannot spiral the state below zero).
    """
    if horizon_hours < 1:
        raise ValueError("horizon must be >= 1 hour")
    if params.fallback_constant:
        return np.full(horizon_hours, BASELINE_FLOOR)
    counts = train.counts if isinstance(train, SensorSeries) else np.asarray(train)
    state = hw_filter(counts.astype(np.float64)[PERIOD:], params)
    level, trend = state.level, state.trend
    ring = state.seasonal.tolist()
    a, b, g = params.alpha, params.beta, params.gamma
    out = np.empty(horizon_hours)
    for h in range(horizon_hours):
        phase = (state.n_consumed + h) % PERIOD
        z = ring[phase]
        prev = level + trend
        value = max(prev * z, BASELINE_FLOOR)
        out[h] = value
        new_level = max(a * (value / z) + (1.0 - a) * prev, LEVEL_FLOOR)
        trend = b * (new_level - level) + (1.0 - b) * trend
        ring[phase] = min(max(g * (value / new_level) + (1.0 - g) * z, SEASONAL_MIN),
                          SEASONAL_MAX)
        level = new_level
    return out


@dataclass(frozen=True)
class ForecastSettings:
    """Knobs for the per-sensor forecasting stage."""

    method: str = "hw"
    sigma_k: float = 3.0
    train_days: int = 21
    horizon_hours: int = 48
    gp_restarts: int = 3
    gp_max_iter: int = 100

    def __post_init__(self):
        if self.method not in ("hw", "gp"):
            raise ValueError(f"unknown forecast method {self.method!r}")


def hw_pipeline(train: SensorSeries, horizon_hours: int, sigma_k: float = 3.0) -> ForecastSeries:
    """Weekday-adjust, fit, forecast and invert the adjustment."""
    factors = weekday_factors(train)
    adjusted = train.counts / factors[train.day_of_week()]
    params = fit_holt_winters(adjusted)
    baseline = forecast_holt_winters(params, adjusted, horizon_hours)
    future = np.arange(train.timestamps[-1] + 1, train.timestamps[-1] + 1 + horizon_hours)
    baseline = baseline * factors[day_of_week(future)]
    return ForecastSeries.from_moments(
        train.sensor_id, future, baseline, np.zeros(horizon_hours), sigma_k
    )


def _forecast_one(series: SensorSeries, forecast_start: int, settings: ForecastSettings):
    train_start = forecast_start - settings.train_days * HOURS_PER_DAY
    train = series.window(train_start, forecast_start - 1)
    if len(train) < 2 * PERIOD:
        return None, "too little training data"
    if not train.is_hourly or train.timestamps[-1] != forecast_start - 1:
        return None, "training window has gaps (preprocess first)"
    if settings.method == "hw":
        return hw_pipeline(train, settings.horizon_hours, settings.sigma_k), None
    from . import gp

    config = gp.GpConfig(restarts=settings.gp_restarts, max_iter=settings.gp_max_iter)
    state = gp.fit_gp(train, config)
    return gp.forecast_gp(state, settings.horizon_hours, settings.sigma_k), None


def make_forecasts(
    series_by_id: Mapping[str, SensorSeries],
    forecast_start: int,
    settings: ForecastSettings,
    threads: int = 1,
) -> dict[str, ForecastSeries]:
    """Per-sensor baselines for the ``horizon_hours`` from ``forecast_start``.

    Training reads only hours strictly before ``forecast_start``; sensors
    without a usable training window are skipped with a logged reason.
    """
    ids = sorted(series_by_id)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(lambda s: _forecast_one(series_by_id[s], forecast_start, settings), ids)
            )
    else:
        results = [_forecast_one(series_by_id[s], forecast_start, settings) for s in ids]
    out: dict[str, ForecastSeries] = {}
    for sensor_id, (fc, reason) in zip(ids, results):
        if fc is None:
            logger.info("make_forecasts: skipping sensor %s: %s", sensor_id, reason)
        else:
            out[sensor_id] = fc
    return out
