import json
import os

import numpy as np
import pytest

from surgescan import io
from surgescan.errors import SchemaError
from surgescan.evaluate import TrialResult
from surgescan.grid import build_grid
from surgescan.metrics import NullDistribution
from surgescan.network import SensorPlacement, segment_network
from surgescan.scan import ScanRegion, UNDIRECTED, scan
from surgescan.series import ForecastSeries, SensorSeries
from surgescan.simulate import block_network


T0 = 440_000


def test_counts_round_trip(tmp_path, rng):
    series = {
        "a": SensorSeries("a", T0 + np.arange(30), rng.poisson(20, 30)),
        "b": SensorSeries("b", T0 + np.arange(5, 40), rng.poisson(3, 35)),
    }
    path = tmp_path / "counts.csv"
    io.write_counts(series, path)
    back = io.read_counts(path)
    assert set(back) == {"a", "b"}
    for sid in series:
        assert np.array_equal(back[sid].timestamps, series[sid].timestamps)
        assert np.array_equal(back[sid].counts, series[sid].counts)


def test_counts_schema_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("sensor,when,count\n")
    with pytest.raises(SchemaError):
        io.read_counts(path)
    path.write_text("sensor_id,timestamp_iso8601,count\na,2020-01-01T00:00:00Z,-3\n")
    with pytest.raises(SchemaError) as err:
        io.read_counts(path)
    assert err.value.line == 2
    path.write_text("sensor_id,timestamp_iso8601,count\na,2020-01-01T00:10:00Z,3\n")
    with pytest.raises(SchemaError) as err:
        io.read_counts(path)
    assert err.value.column == "timestamp_iso8601"


def test_sensors_round_trip(tmp_path):
    sensors = [
        SensorPlacement("a", -0.12, 51.5, direction="forward"),
        SensorPlacement("b", -0.13, 51.51),
    ]
    path = tmp_path / "sensors.csv"
    io.write_sensors(sensors, path)
    back = io.read_sensors(path)
    assert back == [
        SensorPlacement("a", -0.12, 51.5, direction="forward"),
        SensorPlacement("b", -0.13, 51.51),
    ]


def test_sensor_duplicate_rejected(tmp_path):
    path = tmp_path / "sensors.csv"
    path.write_text("sensor_id,lon,lat\na,0.0,0.0\na,1.0,1.0\n")
    with pytest.raises(SchemaError) as err:
        io.read_sensors(path)
    assert err.value.line == 3


def test_forecast_round_trip(tmp_path, rng):
    mean = rng.uniform(5, 20, 48)
    std = rng.uniform(0.1, 2.0, 48)
    fc = ForecastSeries.from_moments("a", T0 + np.arange(48), mean, std, sigma_k=3.0)
    path = tmp_path / "fc.csv"
    io.write_forecasts({"a": fc}, path)
    back = io.read_forecasts(path)["a"]
    assert np.array_equal(back.timestamps, fc.timestamps)
    for field in ("mean", "std", "lower", "upper"):
        assert np.array_equal(getattr(back, field), getattr(fc, field))


def test_scores_round_trip_and_rank_order(tmp_path, rng):
    regions = [
        ScanRegion("rect:0-0.0-0", {UNDIRECTED: ("a",)}, 1),
        ScanRegion("rect:0-1.0-0", {UNDIRECTED: ("a", "b")}, 2),
    ]
    forecasts = {
        sid: ForecastSeries.from_moments(sid, T0 + np.arange(24), np.full(24, 10.0),
                                         np.zeros(24))
        for sid in ("a", "b")
    }
    actuals = {
        sid: SensorSeries(sid, T0 + np.arange(24), rng.poisson(15, 24))
        for sid in ("a", "b")
    }
    result = scan(regions, forecasts, actuals)
    null = NullDistribution("pl", "ebp", rng.uniform(1, 4, 50))
    path = tmp_path / "scores.csv"
    io.write_scores(result, path, null=null)
    rows = io.read_scores(path)
    assert len(rows) == len(result)
    assert [r["rank"] for r in rows] == list(range(1, len(rows) + 1))
    raws = [r["raw"] for r in rows]
    assert raws == sorted(raws, reverse=True)
    threshold = null.threshold(99.0)
    for row in rows:
        assert row["corrected"] == pytest.approx(row["raw"] - threshold)
        assert row["direction"] == UNDIRECTED
        assert row["metric"] == "ebp"


def test_null_and_threshold_round_trip(tmp_path, rng):
    nulls = {
        "pl": NullDistribution("pl", "ebp", rng.uniform(1, 5, 101)),
        "net": NullDistribution("net", "ebp", rng.uniform(1, 4, 101)),
    }
    path = tmp_path / "null.csv"
    io.write_null(nulls, path)
    back = io.read_null(path)
    assert set(back) == {("pl", "ebp"), ("net", "ebp")}
    for key, null in back.items():
        assert np.array_equal(null.samples, nulls[key[0]].samples)
    tpath = tmp_path / "thresholds.csv"
    io.write_thresholds(nulls, 99.0, tpath)
    rows = tpath.read_text().splitlines()
    assert rows[0] == "scan_type,metric,percentile,threshold"
    assert len(rows) == 3


def test_trials_round_trip(tmp_path):
    trials = [
        TrialResult(0, "pl", "hw", 2, 0.5, 0.75, (-1.5, 0.25, 2.0), 1.25, 0.5, 10),
        TrialResult(1, "net", "gp", None, float("nan"), float("nan"),
                    (-3.0, -2.0, -1.0), 2.0, 0.75, 5),
    ]
    path = tmp_path / "trials.csv"
    io.write_trials(trials, path)
    back = io.read_trials(path)
    assert back[0].detect_day == 2
    assert back[0].precision == 0.5
    assert back[0].day_scores == (-1.5, 0.25, 2.0)
    assert back[1].detect_day is None
    assert np.isnan(back[1].precision)
    from surgescan.evaluate import aggregate_trials

    by_config = {(a.scan_type, a.forecast_method): a for a in aggregate_trials(back)}
    assert by_config[("pl", "hw")].mean_precision == 0.5


def test_network_csv_round_trip(tmp_path):
    network = block_network(3, 2, block_len_m=250.0)
    path = tmp_path / "net.csv"
    io.write_network_csv(network, path)
    back = io.read_network(path)
    assert len(back.edges) == len(network.edges)
    assert back.total_length_m() == pytest.approx(network.total_length_m())
    segments = segment_network(back, 100.0)
    assert len(segments) == len(network.edges) * 3


def test_network_geojson(tmp_path):
    doc = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "LineString",
                             "coordinates": [[0.0, 51.5], [0.001, 51.5]]},
                "properties": {"edge_id": "e1", "oneway": True},
            }
        ],
    }
    path = tmp_path / "net.geojson"
    path.write_text(json.dumps(doc))
    network = io.read_network(path)
    assert network.edges[0].edge_id == "e1"
    assert network.edges[0].oneway
    doc["features"][0]["properties"] = {}
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError):
        io.read_network(path)


def test_boundary_reading_and_containment(tmp_path):
    doc = {
        "type": "Polygon",
        "coordinates": [[[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0], [0.0, 0.0]]],
    }
    path = tmp_path / "boundary.geojson"
    path.write_text(json.dumps(doc))
    boundary = io.read_boundary(path)
    assert boundary.bbox == (0.0, 0.0, 2.0, 2.0)
    assert boundary.contains(1.0, 1.0)
    assert not boundary.contains(3.0, 1.0)


def test_grid_csv(tmp_path):
    grid = build_grid((0.0, 0.0, 1.0, 1.0), 2)
    path = tmp_path / "grid.csv"
    io.write_grid_csv(grid, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "axis,index,coordinate"
    assert len(lines) == 1 + 2 * 3


def test_heatmap_geojson_outputs(tmp_path):
    grid = build_grid((0.0, 0.0, 1.0, 1.0), 2)
    path = tmp_path / "cells.geojson"
    io.write_heatmap_cells({(0, 0): 2.5}, grid, path)
    doc = json.loads(path.read_text())
    assert doc["type"] == "FeatureCollection"
    assert doc["features"][0]["properties"]["mean_score"] == 2.5
    network = block_network(2, 2, block_len_m=100.0)
    segments = segment_network(network, 100.0)
    spath = tmp_path / "segments.geojson"
    io.write_heatmap_segments({0: 1.5}, segments, spath)
    sdoc = json.loads(spath.read_text())
    assert sdoc["features"][0]["properties"]["segment_id"] == 0


def test_atomic_write_leaves_no_partial_file(tmp_path):
    target = tmp_path / "out.csv"

    with pytest.raises(RuntimeError):
        with io.atomic_write(target) as handle:
            handle.write("partial")
            raise RuntimeError("boom")
    assert not target.exists()
    assert list(tmp_path.iterdir()) == []


def test_atomic_write_replaces_existing(tmp_path):
    target = tmp_path / "out.csv"
    target.write_text("old")
    with io.atomic_write(target) as handle:
        handle.write("new")
    assert target.read_text() == "new"
