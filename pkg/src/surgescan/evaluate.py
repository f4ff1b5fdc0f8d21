"""Detection-time and spatial accuracy benchmarking over simulated surges.

Each trial pairs every configuration (scan type x forecast method) on
byte-identical data: trial seeds derive from the benchmark seed, the surge is
drawn once, and all configurations score the same surged series. Spatial
precision/recall follow the sensor-set definitions: precision is the fraction
of the top region's sensors that truly surge, recall the fraction of truly
surging sensors the top region captures.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import BenchmarkError, CalibrationError
from .forecast import ForecastSettings, make_forecasts
from .metrics import NullDistribution
from .series import HOURS_PER_DAY
from .simulate import (
    ScanSetup,
    SimConfig,
    SurgeFreeData,
    draw_surge_spec,
    generate_surge_free,
    inject_surge,
)

logger = logging.getLogger(__name__)

MAX_FAILED_TRIAL_FRACTION = 0.10


def spatial_precision_recall(
    top_members: Sequence[str] | set[str], truth: set[str]
) -> tuple[float, float]:
    """Sensor-level precision and recall of a detected region.

    Precision is defined as 0 when the region contains no sensors.
    """
    if not truth:
        raise ValueError("truth set must be nonempty")
    members = set(top_members)
    hit = len(members & truth)
    precision = hit / len(members) if members else 0.0
    recall = hit / len(truth)
    return precision, recall


def detection_day(corrected_scores: Sequence[float]) -> int | None:
    """First surge day (1-based) whose corrected score reaches 0, else None."""
    for day, score in enumerate(corrected_scores, start=1):
        if score >= 0.0:
            return day
    return None


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one (trial, scan type, forecast method) combination."""

    trial: int
    scan_type: str
    forecast_method: str
    detect_day: int | None
    precision: float
    recall: float
    # log-corrected top score per surge day: log(raw) - log(alarm level);
    # >= 0 exactly when the raw score reaches the alarm level, and finite
    # even when the raw score saturates the exponential.
    day_scores: tuple[float, ...]
    forecast_secs: float
    scan_secs: float
    truth_size: int
    truth_off_network: int = 0


@dataclass(frozen=True)
class ConfigAggregate:
    """Per-configuration summary, recomputable from persisted trials."""

    scan_type: str
    forecast_method: str
    n_trials: int
    detection_rate: float
    mean_precision: float
    precision_ci: tuple[float, float]
    mean_recall: float
    recall_ci: tuple[float, float]
    mean_day_scores: tuple[float, ...]
    mean_detect_day: float | None
    mean_forecast_secs: float
    mean_scan_secs: float


@dataclass(frozen=True)
class BenchmarkReport:
    trials: tuple[TrialResult, ...]
    aggregates: tuple[ConfigAggregate, ...]
    n_requested: int
    n_failed: int


def _bootstrap_ci(
    values: np.ndarray, seed: int, n_boot: int = 1000
) -> tuple[float, float]:
    if values.size < 2:
        v = float(values[0]) if values.size else float("nan")
        return (v, v)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
    means = rng.choice(values, size=(n_boot, values.size), replace=True).mean(axis=1)
    return (float(np.percentile(means, 2.5)), float(np.percentile(means, 97.5)))


def aggregate_trials(trials: Sequence[TrialResult], seed: int = 0) -> list[ConfigAggregate]:
    """Fold per-trial rows into per-configuration aggregates."""
    by_config: dict[tuple[str, str], list[TrialResult]] = {}
    for t in trials:
        by_config.setdefault((t.scan_type, t.forecast_method), []).append(t)
    out = []
    for (scan_type, method), rows in sorted(by_config.items()):
        precision = np.array([r.precision for r in rows if not np.isnan(r.precision)])
        recall = np.array([r.recall for r in rows if not np.isnan(r.recall)])
        detected = [r.detect_day for r in rows if r.detect_day is not None]
        n_days = len(rows[0].day_scores)
        day_means = tuple(
            float(np.mean([r.day_scores[d] for r in rows])) for d in range(n_days)
        )
        out.append(
            ConfigAggregate(
                scan_type=scan_type,
                forecast_method=method,
                n_trials=len(rows),
                detection_rate=len(detected) / len(rows),
                mean_precision=float(precision.mean()) if precision.size else float("nan"),
                precision_ci=_bootstrap_ci(precision, seed),
                mean_recall=float(recall.mean()) if recall.size else float("nan"),
                recall_ci=_bootstrap_ci(recall, seed),
                mean_day_scores=day_means,
                mean_detect_day=float(np.mean(detected)) if detected else None,
                mean_forecast_secs=float(np.mean([r.forecast_secs for r in rows])),
                mean_scan_secs=float(np.mean([r.scan_secs for r in rows])),
            )
        )
    return out


def _trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, 424242, trial]).generate_state(1)[0])


def run_benchmark(
    data_sensors,
    sim_config: SimConfig,
    setups: Sequence[ScanSetup],
    methods: Sequence[str],
    nulls: Mapping[tuple[str, str], NullDistribution],
    n_trials: int,
    bbox: tuple[float, float, float, float],
    percentile: float = 99.0,
    k_min: int = 10,
    k_max: int = 100,
    surge_days: int = 3,
    lambda_cap: float = 4.0,
    settings: ForecastSettings = ForecastSettings(),
    threads: int = 1,
) -> BenchmarkReport:
    """Generate, inject, forecast and scan ``n_trials`` paired surge trials.

    ``nulls`` must hold a calibrated null per (scan_type, method); scores are
    reported against its ``percentile`` alarm level. Failed trials are
    recorded and excluded, but more than 10% failures refuses aggregation.
    """
    for setup in setups:
        for method in methods:
            if (setup.scan_type, method) not in nulls:
                raise CalibrationError(
                    f"no calibrated null for ({setup.scan_type}, {method})"
                )
    thresholds = {
        key: null.threshold(percentile) for key, null in nulls.items()
    }
    for key, value in thresholds.items():
        if value <= 0:
            raise CalibrationError(f"non-positive alarm level for {key}; "
                                   "log-corrected reporting needs a positive threshold")

    trials: list[TrialResult] = []
    failures = 0
    for trial in range(n_trials):
        try:
            trials.extend(
                _run_trial(
                    trial, data_sensors, sim_config, setups, methods, thresholds,
                    bbox, k_min, k_max, surge_days, lambda_cap, settings, threads,
                )
            )
        except Exception as exc:  # noqa: BLE001 - each trial is isolated
            failures += 1
            logger.error("trial %d failed: %s", trial, exc)
    if n_trials and failures / n_trials > MAX_FAILED_TRIAL_FRACTION:
        raise BenchmarkError(
            f"{failures}/{n_trials} trials failed; refusing to aggregate"
        )
    return BenchmarkReport(
        trials=tuple(trials),
        aggregates=tuple(aggregate_trials(trials, seed=sim_config.seed)),
        n_requested=n_trials,
        n_failed=failures,
    )


def _run_trial(
    trial, data_sensors, sim_config, setups, methods, thresholds,
    bbox, k_min, k_max, surge_days, lambda_cap, settings, threads,
) -> list[TrialResult]:
    seed = _trial_seed(sim_config.seed, trial)
    config = replace(sim_config, seed=seed)
    data = generate_surge_free(data_sensors, config)
    spec_rng = np.random.default_rng(np.random.SeedSequence([seed, 99]))
    spec = draw_surge_spec(
        spec_rng, bbox, k_min=k_min, k_max=k_max,
        surge_days=surge_days, lambda_cap=lambda_cap,
    )
    outcome = inject_surge(data, spec)
    truth = set(outcome.affected)

    results = []
    end_hour = config.start_hour + config.hours_total
    for method in methods:
        method_settings = replace(settings, method=method)
        forecast_secs = 0.0
        day_forecasts = []
        for day in range(surge_days):
            t_end = end_hour - (surge_days - 1 - day) * HOURS_PER_DAY - 1
            start = time.perf_counter()
            forecasts = make_forecasts(
                outcome.series, t_end - settings.horizon_hours + 1,
                method_settings, threads=threads,
            )
            forecast_secs += time.perf_counter() - start
            day_forecasts.append(forecasts)
        for setup in setups:
            scan_secs = 0.0
            day_scores = []
            top_members: tuple[str, ...] = ()
            threshold = thresholds[(setup.scan_type, method)]
            log_threshold = float(np.log(threshold))
            for day, forecasts in enumerate(day_forecasts):
                start = time.perf_counter()
                result = setup.run(forecasts, outcome.series)
                scan_secs += time.perf_counter() - start
                day_scores.append(result.max_log() - log_threshold)
                if day == surge_days - 1:
                    top = result.top()
                    top_members = top.members if top is not None else ()
            scan_truth = truth
            off_network = 0
            if setup.scan_type == "net":
                reachable = set()
                for region in setup.regions:
                    reachable.update(region.all_members())
                scan_truth = truth & reachable
                off_network = len(truth) - len(scan_truth)
                if off_network:
                    logger.info(
                        "trial %d: %d surging sensors lie off-network", trial, off_network
                    )
            if scan_truth:
                precision, recall = spatial_precision_recall(top_members, scan_truth)
            else:
                precision, recall = float("nan"), float("nan")
            results.append(
                TrialResult(
                    trial=trial,
                    scan_type=setup.scan_type,
                    forecast_method=method,
                    detect_day=detection_day(day_scores),
                    precision=precision,
                    recall=recall,
                    day_scores=tuple(day_scores),
                    forecast_secs=forecast_secs,
                    scan_secs=scan_secs,
                    truth_size=len(truth),
                    truth_off_network=off_network,
                )
            )
    return results
