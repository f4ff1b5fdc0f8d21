"""File formats: counts/forecast/score/null/trial CSVs and GeoJSON inputs.

Writers are atomic (temp file + rename) so partial outputs are never left
behind, and floats are serialized with ``repr`` so every file round-trips
bit-exactly through its reader.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import SchemaError
from .evaluate import TrialResult
from .grid import PlanarGrid
from .metrics import NullDistribution
from .network import RoadNetwork, Segment, SensorPlacement
from .scan import ScanResult
from .series import ForecastSeries, SensorSeries, hour_to_iso, iso_to_hour

COUNTS_HEADER = ["sensor_id", "timestamp_iso8601", "count"]
SENSORS_HEADER = ["sensor_id", "lon", "lat"]
FORECAST_HEADER = ["sensor_id", "timestamp", "mean", "std", "lower", "upper"]
SCORES_HEADER = [
    "region_key", "metric", "window_start", "window_end", "direction",
    "B", "C", "raw", "log_raw", "corrected", "rank",
]
NULL_HEADER = ["scan_type", "metric", "day_index", "max_score"]
THRESHOLDS_HEADER = ["scan_type", "metric", "percentile", "threshold"]
TRIALS_HEADER = [
    "trial", "scan", "forecast", "detect_day", "precision", "recall",
    "score_d1", "score_d2", "score_d3", "forecast_secs", "scan_secs",
]
NETWORK_CSV_HEADER = ["edge_id", "from_lon", "from_lat", "to_lon", "to_lat", "length_m"]


@contextmanager
def atomic_write(path: str | Path):
    """Write to a temp file in the target directory, renaming on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            yield handle
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _fmt(value: float) -> str:
    return repr(float(value))


def _parse_float(text: str, path, line: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise SchemaError(
            f"bad float {text!r}", path=path, line=line, column=column
        ) from None


def _parse_int(text: str, path, line: int, column: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise SchemaError(f"bad integer {text!r}", path=path, line=line, column=column) from None


def _parse_hour(text: str, path, line: int, column: str) -> int:
    try:
        return iso_to_hour(text)
    except ValueError as exc:
        raise SchemaError(str(exc), path=path, line=line, column=column) from None


def _check_header(row: list[str] | None, expected: list[str], path, optional_tail=()):
    base = list(expected)
    if row is None:
        raise SchemaError("empty file, header expected", path=path, line=1)
    if row == base:
        return False
    if optional_tail and row == base + list(optional_tail):
        return True
    raise SchemaError(
        f"bad header {row!r}, expected {base!r}"
        + (f" optionally followed by {list(optional_tail)!r}" if optional_tail else ""),
        path=path,
        line=1,
    )


def _read_rows(path: str | Path):
    path = Path(path)
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        rows = list(reader)
    return rows


# -- counts -----------------------------------------------------------------


def write_counts(series_by_id: Mapping[str, SensorSeries], path: str | Path) -> None:
    with atomic_write(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(COUNTS_HEADER)
        for sensor_id in sorted(series_by_id):
            series = series_by_id[sensor_id]
            for ts, count in zip(series.timestamps.tolist(), series.counts.tolist()):
                writer.writerow([sensor_id, hour_to_iso(ts), count])


def read_counts(path: str | Path) -> dict[str, SensorSeries]:
    rows = _read_rows(path)
    _check_header(rows[0] if rows else None, COUNTS_HEADER, path)
    data: dict[str, list[tuple[int, int]]] = {}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise SchemaError(f"expected 3 columns, got {len(row)}", path=path, line=i)
        sensor_id, ts_text, count_text = row
        hour = _parse_hour(ts_text, path, i, "timestamp_iso8601")
        count = _parse_int(count_text, path, i, "count")
        if count < 0:
            raise SchemaError("negative count", path=path, line=i, column="count")
        data.setdefault(sensor_id, []).append((hour, count))
    out = {}
    for sensor_id, pairs in data.items():
        pairs.sort()
        hours = [p[0] for p in pairs]
        if len(set(hours)) != len(hours):
            raise SchemaError(f"duplicate timestamps for sensor {sensor_id}", path=path)
        out[sensor_id] = SensorSeries(
            sensor_id, np.array(hours, dtype=np.int64),
            np.array([p[1] for p in pairs], dtype=np.int64),
        )
    return out


# -- sensors ------------------------------------------------------------------


def write_sensors(sensors: Sequence[SensorPlacement], path: str | Path) -> None:
    with atomic_write(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(SENSORS_HEADER + ["direction"])
        for s in sorted(sensors, key=lambda s: s.sensor_id):
            writer.writerow([s.sensor_id, _fmt(s.lon), _fmt(s.lat), s.direction or ""])


def read_sensors(path: str | Path) -> list[SensorPlacement]:
    rows = _read_rows(path)
    has_direction = _check_header(
        rows[0] if rows else None, SENSORS_HEADER, path, optional_tail=["direction"]
    )
    out = []
    seen = set()
    for i, row in enumerate(rows[1:], start=2):
        expected = 4 if has_direction else 3
        if len(row) != expected:
            raise SchemaError(f"expected {expected} columns, got {len(row)}", path=path, line=i)
        sensor_id = row[0]
        if sensor_id in seen:
            raise SchemaError(f"duplicate sensor id {sensor_id!r}", path=path, line=i,
                              column="sensor_id")
        seen.add(sensor_id)
        direction = row[3] if has_direction and row[3] else None
        if direction not in (None, "forward", "reverse"):
            raise SchemaError(f"bad direction {direction!r}", path=path, line=i,
                              column="direction")
        out.append(
            SensorPlacement(
                sensor_id,
                _parse_float(row[1], path, i, "lon"),
                _parse_float(row[2], path, i, "lat"),
                direction=direction,
            )
        )
    return out


# -- road networks ------------------------------------------------------------


def read_network(path: str | Path) -> RoadNetwork:
    """Read a road network from GeoJSON LineStrings or an edge-list CSV."""
    path = Path(path)
    if path.suffix.lower() in (".json", ".geojson"):
        return read_network_geojson(path)
    return read_network_csv(path)


def read_network_geojson(path: str | Path) -> RoadNetwork:
    with open(path) as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}", path=path) from None
    if doc.get("type") != "FeatureCollection":
        raise SchemaError("expected a FeatureCollection", path=path)
    features = []
    for idx, feature in enumerate(doc.get("features", [])):
        geometry = feature.get("geometry") or {}
        if geometry.get("type") != "LineString":
            raise SchemaError(f"feature {idx} is not a LineString", path=path)
        props = feature.get("properties") or {}
        if "edge_id" not in props:
            raise SchemaError(f"feature {idx} lacks an edge_id property", path=path)
        features.append(
            (str(props["edge_id"]), geometry.get("coordinates", []),
             bool(props.get("oneway", False)))
        )
    return RoadNetwork.from_linestrings(features)


def read_network_csv(path: str | Path) -> RoadNetwork:
    rows = _read_rows(path)
    _check_header(rows[0] if rows else None, NETWORK_CSV_HEADER, path)
    edges = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 6:
            raise SchemaError(f"expected 6 columns, got {len(row)}", path=path, line=i)
        edges.append(
            (
                row[0],
                _parse_float(row[1], path, i, "from_lon"),
                _parse_float(row[2], path, i, "from_lat"),
                _parse_float(row[3], path, i, "to_lon"),
                _parse_float(row[4], path, i, "to_lat"),
                _parse_float(row[5], path, i, "length_m"),
            )
        )
    return RoadNetwork.from_edge_rows(edges)


def write_network_csv(network: RoadNetwork, path: str | Path) -> None:
    coords = {v[0]: (v[1], v[2]) for v in network.vertices}
    with atomic_write(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(NETWORK_CSV_HEADER)
        for edge in network.edges:
            (flon, flat), (tlon, tlat) = coords[edge.u], coords[edge.v]
            writer.writerow(
                [edge.edge_id, _fmt(flon), _fmt(flat), _fmt(tlon), _fmt(tlat),
                 _fmt(edge.length_m)]
            )


# -- boundaries ---------------------------------------------------------------


@dataclass(frozen=True)
class Boundary:
    """A polygon boundary: bounding box plus even-odd point membership."""

    bbox: tuple[float, float, float, float]
    rings: tuple[tuple[tuple[float, float], ...], ...]

    def contains(self, lon: float, lat: float) -> bool:
        inside = False
        for ring in self.rings:
            n = len(ring)
            for i in range(n - 1):
                x1, y1 = ring[i]
                x2, y2 = ring[i + 1]
                if (y1 > lat) != (y2 > lat):
                    x_cross = x1 + (lat - y1) / (y2 - y1) * (x2 - x1)
                    if lon < x_cross:
                        inside = not inside
        return inside


def read_boundary(path: str | Path) -> Boundary:
    """Read a GeoJSON Polygon/MultiPolygon (bare geometry or Feature)."""
    with open(path) as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}", path=path) from None
    geometry = doc.get("geometry", doc)
    gtype = geometry.get("type")
    if gtype == "Polygon":
        polygons = [geometry.get("coordinates", [])]
    elif gtype == "MultiPolygon":
        polygons = geometry.get("coordinates", [])
    else:
        raise SchemaError(f"expected Polygon or MultiPolygon, got {gtype!r}", path=path)
    rings = []
    for polygon in polygons:
        for ring in polygon:
            if len(ring) < 4:
                raise SchemaError("ring with fewer than 4 coordinates", path=path)
            rings.append(tuple((float(x), float(y)) for x, y in ring))
    if not rings:
        raise SchemaError("boundary has no rings", path=path)
    lons = [p[0] for ring in rings for p in ring]
    lats = [p[1] for ring in rings for p in ring]
    return Boundary((min(lons), min(lats), max(lons), max(lats)), tuple(rings))


# -- forecasts ----------------------------------------------------------------


def write_forecasts(forecasts: Mapping[str, ForecastSeries], path: str | Path) -> None:
    with atomic_write(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(FORECAST_HEADER)
        for sensor_id in sorted(forecasts):
            fc = forecasts[sensor_id]
            for i, ts in enumerate(fc.timestamps.tolist()):
                writer.writerow(
                    [sensor_id, hour_to_iso(ts), _fmt(fc.mean[i]), _fmt(fc.std[i]),
                     _fmt(fc.lower[i]), _fmt(fc.upper[i])]
                )


def read_forecasts(path: str | Path) -> dict[str, ForecastSeries]:
    rows = _read_rows(path)
    _check_header(rows[0] if rows else None, FORECAST_HEADER, path)
    data: dict[str, list[tuple]] = {}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 6:
            raise SchemaError(f"expected 6 columns, got {len(row)}", path=path, line=i)
        hour = _parse_hour(row[1], path, i, "timestamp")
        values = [_parse_float(row[2 + j], path, i, FORECAST_HEADER[2 + j]) for j in range(4)]
        data.setdefault(row[0], []).append((hour, *values))
    out = {}
    for sensor_id, entries in data.items():
        entries.sort()
        arrays = list(zip(*entries))
        out[sensor_id] = ForecastSeries(
            sensor_id,
            np.array(arrays[0], dtype=np.int64),
            np.array(arrays[1]),
            np.array(arrays[2]),
            np.array(arrays[3]),
            np.array(arrays[4]),
        )
    return out


# -- scores -------------------------------------------------------------------


def write_scores(
    result: ScanResult,
    path: str | Path,
    null: NullDistribution | None = None,
    percentile: float = 99.0,
) -> None:
    """Persist every scored entry in rank order."""
    threshold = null.threshold(percentile) if null is not None else None
    with atomic_write(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(SCORES_HEADER)
        for rank, i in enumerate(result.order(), start=1):
            row_idx = int(result.entry_row[i])
            region = result.regions[int(result.row_region[row_idx])]
            raw = float(result.raw[i])
            corrected = "" if threshold is None else _fmt(raw - threshold)
            writer.writerow(
                [
                    region.key,
                    result.metric,
                    hour_to_iso(result.t0 + int(result.win_start[i])),
                    hour_to_iso(result.t0 + int(result.win_end[i])),
                    result.row_direction[row_idx],
                    _fmt(result.baseline[i]),
                    _fmt(result.count[i]),
                    _fmt(raw),
                    _fmt(result.log_ratio[i]),
                    corrected,
                    rank,
                ]
            )


def read_scores(path: str | Path) -> list[dict]:
    rows = _read_rows(path)
    _check_header(rows[0] if rows else None, SCORES_HEADER, path)
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(SCORES_HEADER):
            raise SchemaError(
                f"expected {len(SCORES_HEADER)} columns, got {len(row)}", path=path, line=i
            )
        out.append(
            {
                "region_key": row[0],
                "metric": row[1],
                "window_start": _parse_hour(row[2], path, i, "window_start"),
                "window_end": _parse_hour(row[3], path, i, "window_end"),
                "direction": row[4],
                "B": _parse_float(row[5], path, i, "B"),
                "C": _parse_float(row[6], path, i, "C"),
                "raw": _parse_float(row[7], path, i, "raw"),
                "log_raw": _parse_float(row[8], path, i, "log_raw"),
                "corrected": _parse_float(row[9], path, i, "corrected") if row[9] else None,
                "rank": _parse_int(row[10], path, i, "rank"),
            }
        )
    return out


# -- null distributions ---------------------------------------------------------


def write_null(nulls: Iterable[NullDistribution] | Mapping, path: str | Path) -> None:
    values = list(nulls.values()) if isinstance(nulls, Mapping) else list(nulls)
    with atomic_write(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(NULL_HEADER)
        for null in sorted(values, key=lambda n: (n.scan_type, n.metric)):
            for day, value in enumerate(null.samples.tolist(), start=1):
                writer.writerow([null.scan_type, null.metric, day, _fmt(value)])


def read_null(path: str | Path) -> dict[tuple[str, str], NullDistribution]:
    """Null samples keyed by (scan_type, metric)."""
    rows = _read_rows(path)
    _check_header(rows[0] if rows else None, NULL_HEADER, path)
    samples: dict[tuple[str, str], list[float]] = {}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise SchemaError(f"expected 4 columns, got {len(row)}", path=path, line=i)
        _parse_int(row[2], path, i, "day_index")
        samples.setdefault((row[0], row[1]), []).append(
            _parse_float(row[3], path, i, "max_score")
        )
    return {
        key: NullDistribution(key[0], key[1], np.array(values))
        for key, values in samples.items()
    }


def write_thresholds(
    nulls: Iterable[NullDistribution] | Mapping, percentile: float, path: str | Path
) -> None:
    values = list(nulls.values()) if isinstance(nulls, Mapping) else list(nulls)
    with atomic_write(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(THRESHOLDS_HEADER)
        for null in sorted(values, key=lambda n: (n.scan_type, n.metric)):
            writer.writerow(
                [null.scan_type, null.metric, _fmt(percentile),
                 _fmt(null.threshold(percentile))]
            )


# -- benchmark trials -----------------------------------------------------------


def write_trials(trials: Sequence[TrialResult], path: str | Path) -> None:
    with atomic_write(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(TRIALS_HEADER)
        for t in trials:
            scores = list(t.day_scores) + [float("nan")] * (3 - len(t.day_scores))
            writer.writerow(
                [
                    t.trial, t.scan_type, t.forecast_method,
                    "" if t.detect_day is None else t.detect_day,
                    _fmt(t.precision), _fmt(t.recall),
                    _fmt(scores[0]), _fmt(scores[1]), _fmt(scores[2]),
                    _fmt(t.forecast_secs), _fmt(t.scan_secs),
                ]
            )


def read_trials(path: str | Path) -> list[TrialResult]:
    rows = _read_rows(path)
    _check_header(rows[0] if rows else None, TRIALS_HEADER, path)
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(TRIALS_HEADER):
            raise SchemaError(
                f"expected {len(TRIALS_HEADER)} columns, got {len(row)}", path=path, line=i
            )
        day_scores = tuple(
            _parse_float(row[6 + d], path, i, f"score_d{d + 1}") for d in range(3)
        )
        day_scores = tuple(s for s in day_scores if not math.isnan(s))
        out.append(
            TrialResult(
                trial=_parse_int(row[0], path, i, "trial"),
                scan_type=row[1],
                forecast_method=row[2],
                detect_day=_parse_int(row[3], path, i, "detect_day") if row[3] else None,
                precision=_parse_float(row[4], path, i, "precision"),
                recall=_parse_float(row[5], path, i, "recall"),
                day_scores=day_scores,
                forecast_secs=_parse_float(row[9], path, i, "forecast_secs"),
                scan_secs=_parse_float(row[10], path, i, "scan_secs"),
                truth_size=0,
            )
        )
    return out


# -- grids and heatmaps -----------------------------------------------------------


def write_grid_csv(grid: PlanarGrid, path: str | Path) -> None:
    """Cell boundary coordinates per axis, for downstream rendering."""
    with atomic_write(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(["axis", "index", "coordinate"])
        for i, value in enumerate(grid.lon_edges.tolist()):
            writer.writerow(["lon", i, _fmt(value)])
        for i, value in enumerate(grid.lat_edges.tolist()):
            writer.writerow(["lat", i, _fmt(value)])


def _geojson_dump(doc: dict, path: str | Path) -> None:
    with atomic_write(path) as handle:
        json.dump(doc, handle, sort_keys=True, indent=1)
        handle.write("\n")


def write_heatmap_cells(
    means: Mapping[tuple[int, int], float], grid: PlanarGrid, path: str | Path
) -> None:
    """Cell polygons with their mean scores; no-data cells are omitted."""
    features = []
    for (ix, iy) in sorted(means):
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[list(p) for p in grid.cell_polygon(ix, iy)]],
                },
                "properties": {"cell_x": ix, "cell_y": iy,
                               "mean_score": float(means[(ix, iy)])},
            }
        )
    _geojson_dump({"type": "FeatureCollection", "features": features}, path)


def write_heatmap_segments(
    means: Mapping[int, float], segments: Sequence[Segment], path: str | Path
) -> None:
    by_id = {s.segment_id: s for s in segments}
    features = []
    for segment_id in sorted(means):
        segment = by_id[segment_id]
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [list(p) for p in segment.geometry],
                },
                "properties": {
                    "segment_id": segment_id,
                    "edge_id": segment.edge_id,
                    "mean_score": float(means[segment_id]),
                },
            }
        )
    _geojson_dump({"type": "FeatureCollection", "features": features}, path)
