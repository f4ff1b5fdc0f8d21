"""Scoring of spatio-temporal search regions and heatmap aggregation.

Region aggregates use per-sensor prefix sums over the forecast horizon, so a
region's cost is linear in its member count while every time window comes for
free. Scores are ranked on the log likelihood ratio (monotone in the raw
score and finite even where the raw score saturates to inf).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError
from .grid import GridRectangle
from .metrics import NullDistribution, asym_score, ebp_log_score
from .network import SegmentPath, SensorPlacement, Segment, path_members
from .series import ForecastSeries, SensorSeries

logger = logging.getLogger(__name__)

UNDIRECTED = "undirected"
DEFAULT_MAX_WINDOW_HOURS = 48

_DIRECTION_ORDER = {UNDIRECTED: 0, "forward": 1, "reverse": 2}


@dataclass(frozen=True)
class ScanRegion:
    """A spatial search region: its key and member sensors per direction."""

    key: str
    members: Mapping[str, tuple[str, ...]]
    size: int
    payload: object = None

    def all_members(self) -> set[str]:
        out: set[str] = set()
        for ids in self.members.values():
            out.update(ids)
        return out


def regions_from_rectangles(rects: Sequence[GridRectangle]) -> list[ScanRegion]:
    return [
        ScanRegion(
            key=f"rect:{r.key_str}",
            members={UNDIRECTED: r.member_ids},
            size=r.size,
            payload=r,
        )
        for r in rects
    ]


def regions_from_paths(
    paths: Sequence[SegmentPath],
    sensors: Sequence[SensorPlacement],
    segments: Sequence[Segment],
    directed: bool = False,
) -> list[ScanRegion]:
    """Network regions with members from snapped sensors.

    With ``directed`` the forward/reverse member splits are scored alongside
    the undirected set.
    """
    by_id = {s.segment_id: s for s in segments}
    snapped = [s for s in sensors if s.snapped]
    out = []
    for path in paths:
        members = path_members(path, snapped, by_id)
        direction_sets = {UNDIRECTED: members.undirected}
        if directed:
            direction_sets["forward"] = members.forward
            direction_sets["reverse"] = members.reverse
        out.append(
            ScanRegion(
                key=f"path:{path.key_str}",
                members=direction_sets,
                size=path.size,
                payload=path,
            )
        )
    return out


@dataclass(frozen=True)
class RegionScore:
    """One scored (region, direction, window) entry."""

    key: str
    direction: str
    t_start: int
    t_end: int
    baseline: float
    count: float
    log_score: float
    score: float
    metric: str
    bound_mode: str
    members: tuple[str, ...]
    size: int
    corrected: float | None = None
    rank: int | None = None


class ScanResult:
    """Columnar scores for every (region, direction, window) entry."""

    def __init__(
        self,
        regions: list[ScanRegion],
        row_region: np.ndarray,
        row_direction: list[str],
        entry_row: np.ndarray,
        win_start: np.ndarray,
        win_end: np.ndarray,
        baseline: np.ndarray,
        count: np.ndarray,
        log_ratio: np.ndarray,
        raw: np.ndarray,
        metric: str,
        bound_mode: str,
        t0: int,
        skipped: list[str],
    ):
        self.regions = regions
        self.row_region = row_region
        self.row_direction = row_direction
        self.entry_row = entry_row
        self.win_start = win_start
        self.win_end = win_end
        self.baseline = baseline
        self.count = count
        self.log_ratio = log_ratio
        self.raw = raw
        self.metric = metric
        self.bound_mode = bound_mode
        self.t0 = t0
        self.skipped = skipped
        self._order: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.raw.size)

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    def max_raw(self) -> float:
        if self.is_empty:
            raise InputError("empty scan has no maximum score")
        return float(self.raw.max())

    def max_log(self) -> float:
        """Max log likelihood ratio among busier-than-expected entries.

        For the asym metric quiet regions carry a large log ratio with a
        negative score, so the log maximum is restricted to entries with a
        non-negative raw score.
        """
        if self.is_empty:
            raise InputError("empty scan has no maximum score")
        if self.metric == "ebp":
            return float(self.log_ratio.max())
        busy = self.raw >= 0
        return float(self.log_ratio[busy].max()) if busy.any() else 0.0

    def order(self) -> np.ndarray:
        """Entry indices sorted by descending score with deterministic ties.

        Ties break on earlier window start, smaller spatial extent, then the
        region key (regions are stored in key order) and direction.
        """
        if self._order is None:
            sizes = np.array([r.size for r in self.regions])
            # Rows were laid out in (region key, direction) order, so the row
            # index doubles as the lexicographic tie-break. The log ratio
            # discriminates between entries whose raw scores both saturate.
            keys = (
                self.entry_row,
                sizes[self.row_region[self.entry_row]],
                self.win_start,
                -self.log_ratio,
                -self.raw,
            )
            self._order = np.lexsort(keys)
        return self._order

    def entry(self, i: int, rank: int | None = None,
              null: NullDistribution | None = None, percentile: float = 99.0) -> RegionScore:
        row = int(self.entry_row[i])
        region = self.regions[int(self.row_region[row])]
        direction = self.row_direction[row]
        raw = float(self.raw[i])
        corrected = raw - null.threshold(percentile) if null is not None else None
        return RegionScore(
            key=region.key,
            direction=direction,
            t_start=self.t0 + int(self.win_start[i]),
            t_end=self.t0 + int(self.win_end[i]),
            baseline=float(self.baseline[i]),
            count=float(self.count[i]),
            log_score=float(self.log_ratio[i]),
            score=raw,
            metric=self.metric,
            bound_mode=self.bound_mode,
            members=region.members[direction],
            size=region.size,
            corrected=corrected,
            rank=rank,
        )

    def ranked(
        self,
        limit: int | None = None,
        null: NullDistribution | None = None,
        percentile: float = 99.0,
    ) -> list[RegionScore]:
        order = self.order()
        if limit is not None:
            order = order[:limit]
        return [
            self.entry(int(i), rank=r + 1, null=null, percentile=percentile)
            for r, i in enumerate(order)
        ]

    def top(self) -> RegionScore | None:
        if self.is_empty:
            return None
        return self.ranked(limit=1)[0]


def _window_family(horizon: int, max_window: int, stride: int, all_windows: bool):
    if all_windows:
        starts, ends = [], []
        for t1 in range(horizon):
            for length in range(1, min(max_window, t1 + 1) + 1, stride):
                starts.append(t1 - length + 1)
                ends.append(t1)
        return np.array(starts, dtype=np.int64), np.array(ends, dtype=np.int64)
    t1 = horizon - 1
    lengths = np.arange(1, min(max_window, horizon) + 1, stride)
    return t1 - lengths + 1, np.full(lengths.size, t1)


def scan(
    regions: Sequence[ScanRegion],
    forecasts: Mapping[str, ForecastSeries],
    actuals: Mapping[str, SensorSeries],
    metric: str = "ebp",
    bound_mode: str = "mean",
    max_window_hours: int = DEFAULT_MAX_WINDOW_HOURS,
    window_stride: int = 1,
    all_windows: bool = False,
) -> ScanResult:
    """Score every region over the configured window family.

    Regions whose member sensors lack forecast (or actual) coverage of the
    horizon are skipped with a logged diagnostic, never zero-filled.
    """
    if metric not in ("ebp", "asym"):
        raise ValueError(f"unknown metric {metric!r}")
    if bound_mode not in ("mean", "upper", "lower"):
        raise ValueError(f"unknown bound mode {bound_mode!r}")
    if not forecasts:
        raise InputError("no forecasts supplied to scan")

    reference = forecasts[min(forecasts)]
    horizon_ts = reference.timestamps
    horizon = int(horizon_ts.size)
    if horizon == 0:
        raise InputError("forecasts cover an empty horizon")
    t0, t_end = int(horizon_ts[0]), int(horizon_ts[-1])

    eligible: dict[str, int] = {}
    for sensor_id in sorted(forecasts):
        fc = forecasts[sensor_id]
        if fc.timestamps.size != horizon or not np.array_equal(fc.timestamps, horizon_ts):
            logger.warning("scan: sensor %s forecast horizon mismatch; excluded", sensor_id)
            continue
        series = actuals.get(sensor_id)
        if series is None or not series.covers(t0, t_end):
            logger.warning("scan: sensor %s lacks actual counts on the horizon; excluded",
                           sensor_id)
            continue
        eligible[sensor_id] = len(eligible)

    bound_attr = {"mean": "mean", "upper": "upper", "lower": "lower"}[bound_mode]
    n_sensors = len(eligible)
    baselines = np.zeros((n_sensors, horizon))
    counts = np.zeros((n_sensors, horizon))
    for sensor_id, idx in eligible.items():
        baselines[idx] = getattr(forecasts[sensor_id], bound_attr)
        counts[idx] = actuals[sensor_id].window(t0, t_end).counts

    cum_b = np.zeros((n_sensors, horizon + 1))
    cum_c = np.zeros((n_sensors, horizon + 1))
    np.cumsum(baselines, axis=1, out=cum_b[:, 1:])
    np.cumsum(counts, axis=1, out=cum_c[:, 1:])

    ordered_regions = sorted(regions, key=lambda r: r.key)
    kept: list[ScanRegion] = []
    skipped: list[str] = []
    for region in ordered_regions:
        missing = [m for m in region.all_members() if m not in eligible]
        if missing:
            skipped.append(region.key)
            continue
        kept.append(region)
    if skipped:
        logger.warning(
            "scan: skipped %d regions with sensors missing forecast hours (e.g. %s)",
            len(skipped), skipped[0],
        )

    row_region: list[int] = []
    row_direction: list[str] = []
    rows_members: list[tuple[str, ...]] = []
    for r_idx, region in enumerate(kept):
        for direction in sorted(region.members, key=_DIRECTION_ORDER.get):
            row_region.append(r_idx)
            row_direction.append(direction)
            rows_members.append(region.members[direction])

    n_rows = len(rows_members)
    membership = np.zeros((n_rows, n_sensors))
    for i, members in enumerate(rows_members):
        for sensor_id in members:
            membership[i, eligible[sensor_id]] = 1.0

    win_start, win_end = _window_family(horizon, max_window_hours, window_stride, all_windows)
    n_windows = win_start.size

    rc_b = membership @ cum_b
    rc_c = membership @ cum_c
    b = rc_b[:, win_end + 1] - rc_b[:, win_start]
    c = rc_c[:, win_end + 1] - rc_c[:, win_start]

    log_ratio = ebp_log_score(b, c)
    if metric == "ebp":
        with np.errstate(over="ignore"):
            raw = np.exp(log_ratio)
    else:
        raw = asym_score(b, c)

    entry_row = np.repeat(np.arange(n_rows), n_windows)
    return ScanResult(
        regions=kept,
        row_region=np.array(row_region, dtype=np.int64),
        row_direction=row_direction,
        entry_row=entry_row,
        win_start=np.tile(win_start, n_rows),
        win_end=np.tile(win_end, n_rows),
        baseline=b.ravel(),
        count=c.ravel(),
        log_ratio=log_ratio.ravel(),
        raw=raw.ravel(),
        metric=metric,
        bound_mode=bound_mode,
        t0=t0,
        skipped=skipped,
    )


def top_region(scores: ScanResult | Sequence[RegionScore]) -> RegionScore | None:
    """Highest-scoring entry, or None for an empty scan."""
    if isinstance(scores, ScanResult):
        return scores.top()
    if not scores:
        return None
    return min(
        scores,
        key=lambda s: (-s.score, -s.log_score, s.t_start, s.size, s.key,
                       _DIRECTION_ORDER.get(s.direction, 9)),
    )


def parse_region_key(key: str):
    """Decode a region key into ("rect", (x0, x1, y0, y1)) or ("path", ids)."""
    kind, _, rest = key.partition(":")
    if kind == "rect":
        xpart, _, ypart = rest.partition(".")
        x0, _, x1 = xpart.partition("-")
        y0, _, y1 = ypart.partition("-")
        return "rect", (int(x0), int(x1), int(y0), int(y1))
    if kind == "path":
        return "path", tuple(int(v) for v in rest.split("+"))
    raise ValueError(f"unrecognized region key {key!r}")


def _mean_by_unit(pairs: Iterable[tuple[str, float]], expand) -> dict:
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for key, value in pairs:
        sums[key] = sums.get(key, 0.0) + value
        counts[key] = counts.get(key, 0) + 1
    unit_sum: dict = {}
    unit_n: dict = {}
    for key, total in sums.items():
        for unit in expand(key):
            unit_sum[unit] = unit_sum.get(unit, 0.0) + total
            unit_n[unit] = unit_n.get(unit, 0) + counts[key]
    return {unit: unit_sum[unit] / unit_n[unit] for unit in unit_sum}


def heatmap_cells(pairs: Iterable[tuple[str, float]]) -> dict[tuple[int, int], float]:
    """Mean raw score per grid cell over all scored regions containing it."""

    def expand(key: str):
        kind, spec = parse_region_key(key)
        if kind != "rect":
            raise ValueError(f"cell heatmap needs rect keys, got {key!r}")
        x0, x1, y0, y1 = spec
        return [(ix, iy) for ix in range(x0, x1 + 1) for iy in range(y0, y1 + 1)]

    return _mean_by_unit(pairs, expand)


def heatmap_segments(pairs: Iterable[tuple[str, float]]) -> dict[int, float]:
    """Mean raw score per segment over all scored paths containing it."""

    def expand(key: str):
        kind, spec = parse_region_key(key)
        if kind != "path":
            raise ValueError(f"segment heatmap needs path keys, got {key!r}")
        return list(spec)

    return _mean_by_unit(pairs, expand)


def heatmap(result: ScanResult, kind: str):
    """Aggregate a scan's raw scores by mean onto cells or segments.

    Cells/segments covered by no scored region are simply absent from the
    returned mapping (the explicit no-data state).
    """
    pairs = (
        (result.regions[int(result.row_region[int(result.entry_row[i])])].key,
         float(result.raw[i]))
        for i in range(len(result))
    )
    if kind == "cells":
        return heatmap_cells(pairs)
    if kind == "segments":
        return heatmap_segments(pairs)
    raise ValueError(f"unknown heatmap kind {kind!r}")
