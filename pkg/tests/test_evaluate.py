import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surgescan.errors import BenchmarkError, CalibrationError
from surgescan.evaluate import (
    BenchmarkReport,
    TrialResult,
    _trial_seed,
    aggregate_trials,
    detection_day,
    run_benchmark,
    spatial_precision_recall,
)
from surgescan.forecast import ForecastSettings
from surgescan.grid import build_grid, enumerate_rectangles
from surgescan.metrics import NullDistribution
from surgescan.scan import regions_from_rectangles
from surgescan.simulate import ScanSetup, SimConfig, random_sensors_in_box

BOX = (0.0, 0.0, 0.1, 0.1)


def test_precision_recall_examples():
    truth = {f"t{i}" for i in range(20)}
    exact = spatial_precision_recall(truth, truth)
    assert exact == (1.0, 1.0)
    top = {"t0", "t1", "t2", "t3", "x"}
    assert spatial_precision_recall(top, truth) == (0.8, 0.2)
    assert spatial_precision_recall({"a", "b"}, truth) == (0.0, 0.0)
    assert spatial_precision_recall(set(), truth) == (0.0, 0.0)
    with pytest.raises(ValueError):
        spatial_precision_recall({"a"}, set())


@settings(max_examples=100, deadline=None)
@given(
    members=st.sets(st.integers(min_value=0, max_value=30)),
    truth=st.sets(st.integers(min_value=0, max_value=30), min_size=1),
)
def test_precision_recall_counting_identities(members, truth):
    members = {f"s{i}" for i in members}
    truth = {f"s{i}" for i in truth}
    precision, recall = spatial_precision_recall(members, truth)
    assert 0.0 <= precision <= 1.0 and 0.0 <= recall <= 1.0
    assert round(precision * max(len(members), 1), 9) == pytest.approx(
        round(precision * max(len(members), 1)), abs=1e-9
    )
    assert recall * len(truth) == pytest.approx(round(recall * len(truth)), abs=1e-9)


def test_detection_day_examples():
    assert detection_day([-2.0, 1.0, 5.0]) == 2
    assert detection_day([-2.0, -1.0, -5.0]) is None
    assert detection_day([0.0, -1.0]) == 1


def test_lower_threshold_never_detects_later():
    raws = [3.0, 6.0, 9.0]
    strict, loose = 7.0, 5.0
    day_strict = detection_day([r - strict for r in raws])
    day_loose = detection_day([r - loose for r in raws])
    assert day_loose <= day_strict


def test_empty_benchmark_is_explicit():
    sensors = random_sensors_in_box(BOX, 5, seed=0)
    setup = ScanSetup(
        "pl",
        tuple(regions_from_rectangles(enumerate_rectangles(build_grid(BOX, 2), sensors))),
    )
    null = NullDistribution("pl", "ebp", np.linspace(1.0, 2.0, 30))
    report = run_benchmark(
        sensors, SimConfig(days_total=25, seed=1), [setup], ["hw"],
        {("pl", "hw"): null}, n_trials=0, bbox=BOX,
    )
    assert report.trials == ()
    assert report.aggregates == ()
    assert report.n_requested == 0


def test_missing_null_is_refused():
    sensors = random_sensors_in_box(BOX, 5, seed=0)
    setup = ScanSetup(
        "pl",
        tuple(regions_from_rectangles(enumerate_rectangles(build_grid(BOX, 2), sensors))),
    )
    with pytest.raises(CalibrationError):
        run_benchmark(sensors, SimConfig(days_total=25, seed=1), [setup], ["hw"], {},
                      n_trials=1, bbox=BOX)


def test_trial_seed_is_stable():
    assert _trial_seed(0, 0) == _trial_seed(0, 0)
    assert _trial_seed(0, 0) != _trial_seed(0, 1)
    assert _trial_seed(1, 0) != _trial_seed(0, 0)


def test_small_benchmark_runs_and_detects():
    sensors = random_sensors_in_box(BOX, 8, seed=0)
    setup = ScanSetup(
        "pl",
        tuple(regions_from_rectangles(enumerate_rectangles(build_grid(BOX, 2), sensors))),
    )
    # a permissive null makes the strong surge trivially detectable
    null = NullDistribution("pl", "ebp", np.linspace(1.0, 3.0, 30))
    config = SimConfig(days_total=26, train_days=21, seed=5)
    report = run_benchmark(
        sensors, config, [setup], ["hw"], {("pl", "hw"): null},
        n_trials=2, bbox=BOX, k_min=3, k_max=5,
    )
    assert report.n_failed == 0
    assert len(report.trials) == 2
    for trial in report.trials:
        assert trial.scan_type == "pl" and trial.forecast_method == "hw"
        assert len(trial.day_scores) == 3
        assert trial.detect_day in (1, 2, 3)
        assert 0.0 <= trial.precision <= 1.0
        assert 0.0 <= trial.recall <= 1.0
        assert trial.forecast_secs > 0 and trial.scan_secs > 0
    agg = report.aggregates[0]
    assert agg.n_trials == 2
    assert agg.detection_rate == 1.0
    assert len(agg.mean_day_scores) == 3


def test_aggregate_recomputable_and_bootstrap_bounds():
    trials = [
        TrialResult(0, "pl", "hw", 2, 0.5, 0.8, (-1.0, 0.5, 2.0), 1.0, 0.1, 10),
        TrialResult(1, "pl", "hw", 1, 0.7, 0.6, (0.5, 1.0, 3.0), 1.2, 0.2, 12),
        TrialResult(2, "pl", "hw", None, 0.0, 0.0, (-2.0, -1.0, -0.5), 0.9, 0.1, 8),
    ]
    aggs = aggregate_trials(trials, seed=7)
    assert len(aggs) == 1
    agg = aggs[0]
    assert agg.n_trials == 3
    assert agg.detection_rate == pytest.approx(2 / 3)
    assert agg.mean_precision == pytest.approx((0.5 + 0.7 + 0.0) / 3)
    assert agg.precision_ci[0] <= agg.mean_precision <= agg.precision_ci[1]
    assert agg.mean_day_scores[2] == pytest.approx((2.0 + 3.0 - 0.5) / 3)
    assert agg.mean_detect_day == pytest.approx(1.5)
    again = aggregate_trials(trials, seed=7)
    assert again == aggs


def test_benchmark_rerun_identical_and_paired():
    sensors = random_sensors_in_box(BOX, 8, seed=0)
    grid = build_grid(BOX, 2)
    setups = [
        ScanSetup("pl", tuple(regions_from_rectangles(enumerate_rectangles(grid, sensors)))),
        ScanSetup(
            "pl-small",
            tuple(regions_from_rectangles(enumerate_rectangles(grid, sensors, 1))),
        ),
    ]
    nulls = {
        (s.scan_type, "hw"): NullDistribution(s.scan_type, "ebp", np.linspace(1, 3, 30))
        for s in setups
    }
    config = SimConfig(days_total=26, train_days=21, seed=5)

    def run():
        return run_benchmark(sensors, config, setups, ["hw"], nulls,
                             n_trials=2, bbox=BOX, k_min=3, k_max=5)

    first, second = run(), run()
    strip = lambda t: (t.trial, t.scan_type, t.detect_day, t.precision, t.recall,
                       t.day_scores, t.truth_size)
    assert [strip(t) for t in first.trials] == [strip(t) for t in second.trials]
    # paired design: both setups saw the same surge in each trial
    by_trial = {}
    for t in first.trials:
        by_trial.setdefault(t.trial, []).append(t)
    for rows in by_trial.values():
        assert len({r.truth_size for r in rows}) == 1


def test_too_many_failures_refuse_aggregation(monkeypatch):
    import surgescan.evaluate as evaluate_mod

    def boom(*args, **kwargs):
        raise RuntimeError("forced failure")

    monkeypatch.setattr(evaluate_mod, "_run_trial", boom)
    sensors = random_sensors_in_box(BOX, 5, seed=0)
    setup = ScanSetup(
        "pl",
        tuple(regions_from_rectangles(enumerate_rectangles(build_grid(BOX, 2), sensors))),
    )
    null = NullDistribution("pl", "ebp", np.linspace(1.0, 2.0, 30))
    with pytest.raises(BenchmarkError):
        evaluate_mod.run_benchmark(
            sensors, SimConfig(days_total=25, seed=1), [setup], ["hw"],
            {("pl", "hw"): null}, n_trials=2, bbox=BOX,
        )


def test_nonpositive_threshold_refused():
    sensors = random_sensors_in_box(BOX, 5, seed=0)
    setup = ScanSetup(
        "pl",
        tuple(regions_from_rectangles(enumerate_rectangles(build_grid(BOX, 2), sensors))),
        metric="asym",
    )
    null = NullDistribution("pl", "asym", np.linspace(-2.0, -0.1, 30))
    with pytest.raises(CalibrationError):
        run_benchmark(sensors, SimConfig(days_total=25, seed=1), [setup], ["hw"],
                      {("pl", "hw"): null}, n_trials=1, bbox=BOX)
