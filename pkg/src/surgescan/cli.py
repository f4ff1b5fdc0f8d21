"""Command-line entry point: simulate, forecast, scan, calibrate, evaluate, heatmap.

Every subcommand reads and writes only the documented CSV/GeoJSON artifacts,
is deterministic under a fixed ``--seed``, and reports failures as a single
``<error-class>: <message>`` line on stderr with a nonzero exit status.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig, apply_overrides, load_config
from .errors import CalibrationError, InputError, SurgeScanError
from .evaluate import aggregate_trials, run_benchmark
from .forecast import make_forecasts, preprocess
from .grid import build_grid, enumerate_rectangles
from .metrics import NullDistribution
from .network import enumerate_paths, segment_network, snap_sensors
from .scan import (
    heatmap_cells,
    heatmap_segments,
    regions_from_paths,
    regions_from_rectangles,
)
from .series import hour_to_iso, iso_to_hour
from .simulate import (
    ScanSetup,
    block_network,
    calibrate_null,
    draw_surge_spec,
    generate_surge_free,
    inject_surge,
    random_sensors_in_box,
    sensors_on_network,
)

logger = logging.getLogger("surgescan")


def _sensor_bbox(sensors):
    lons = [s.lon for s in sensors]
    lats = [s.lat for s in sensors]
    return (min(lons), min(lats), max(lons), max(lats))


def _load_boundary_bbox(args, sensors):
    if getattr(args, "boundary", None):
        boundary = io.read_boundary(args.boundary)
        return boundary.bbox, boundary.contains
    if not sensors:
        raise InputError("no boundary given and no sensors to derive a bounding box from")
    return _sensor_bbox(sensors), None


def _build_setup(scan_type: str, cfg: RunConfig, sensors, args) -> ScanSetup:
    scan_cfg = cfg.scan
    if scan_type == "pl":
        bbox, _ = _load_boundary_bbox(args, sensors)
        grid = build_grid(bbox, scan_cfg.grid_n)
        regions = regions_from_rectangles(
            enumerate_rectangles(grid, sensors, scan_cfg.max_rect_size)
        )
    else:
        if not getattr(args, "network", None):
            raise InputError("network scans need --network")
        network = io.read_network(args.network)
        segments = segment_network(network, scan_cfg.segment_len_m)
        snapped = snap_sensors(sensors, segments, scan_cfg.snap_tolerance_deg)
        paths = enumerate_paths(
            segments, scan_cfg.path_min_m, scan_cfg.path_max_m, scan_cfg.max_paths
        )
        regions = regions_from_paths(paths, snapped, segments, directed=scan_cfg.directed)
    return ScanSetup(
        scan_type=scan_type,
        regions=tuple(regions),
        metric=scan_cfg.metric,
        bound_mode=scan_cfg.bound_mode,
        max_window_hours=cfg.forecast.horizon_hours,
    )


def _read_or_make_sensors(args, cfg: RunConfig):
    if args.sensors:
        return io.read_sensors(args.sensors), False
    if args.make_sensors:
        if getattr(args, "network", None):
            network = io.read_network(args.network)
            return sensors_on_network(network, args.make_sensors, cfg.seed), True
        if getattr(args, "boundary", None):
            boundary = io.read_boundary(args.boundary)
            return random_sensors_in_box(boundary.bbox, args.make_sensors, cfg.seed), True
        raise InputError("--make-sensors needs --network or --boundary")
    raise InputError("give --sensors, or --make-sensors with --network/--boundary")


def cmd_simulate(args, cfg: RunConfig) -> int:
    sensors, generated = _read_or_make_sensors(args, cfg)
    data = generate_surge_free(sensors, cfg.sim_config())
    series = data.series
    if args.inject_surge:
        bbox, contains = _load_boundary_bbox(args, sensors)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 99]))
        spec = draw_surge_spec(
            rng, bbox,
            k_min=cfg.surge.k_min, k_max=cfg.surge.k_max,
            surge_days=cfg.surge.days, lambda_cap=cfg.surge.lambda_cap,
            contains=contains,
        )
        outcome = inject_surge(data, spec)
        series = outcome.series
        if args.out_truth:
            with io.atomic_write(args.out_truth) as handle:
                writer = csv.writer(handle)
                writer.writerow(["sensor_id"])
                for sensor_id in outcome.affected:
                    writer.writerow([sensor_id])
    elif args.out_truth:
        raise InputError("--out-truth needs --inject-surge")
    io.write_counts(series, args.out)
    if generated and args.out_sensors:
        io.write_sensors(sensors, args.out_sensors)
    return 0


def cmd_forecast(args, cfg: RunConfig) -> int:
    counts = io.read_counts(args.counts)
    if not counts:
        raise InputError("counts file contains no data rows")
    if not args.no_preprocess:
        cleaned = {}
        for sensor_id, series in counts.items():
            try:
                cleaned[sensor_id] = preprocess(
                    series, cfg.forecast.max_gap_hours, cfg.forecast.min_coverage
                )
            except SurgeScanError as exc:
                logger.warning("forecast: %s", exc)
        counts = cleaned
    if not counts:
        raise InputError("no sensor survived preprocessing")
    horizon = cfg.forecast.horizon_hours
    if args.forecast_start:
        start = iso_to_hour(args.forecast_start)
    else:
        start = max(int(s.timestamps[-1]) for s in counts.values()) - horizon + 1
    forecasts = make_forecasts(counts, start, cfg.forecast_settings(), threads=cfg.threads)
    if not forecasts:
        raise InputError("no sensor had a usable training window")
    logger.info("forecast: %d sensors over %s..%s", len(forecasts),
                hour_to_iso(start), hour_to_iso(start + horizon - 1))
    io.write_forecasts(forecasts, args.out)
    return 0


def _select_null(args, cfg: RunConfig) -> NullDistribution | None:
    if not getattr(args, "null", None):
        return None
    nulls = io.read_null(args.null)
    key = (cfg.scan.scan_type, cfg.scan.metric)
    if key not in nulls:
        raise CalibrationError(
            f"null file {args.null} has no samples for scan_type={key[0]} metric={key[1]}"
        )
    return nulls[key]


def cmd_scan(args, cfg: RunConfig) -> int:
    cfg = apply_overrides(cfg, {
        "scan.scan_type": args.scan_type,
        "scan.max_rect_size": args.max_rect_size,
        "scan.time_window_stride": args.time_window_stride,
    })
    sensors = io.read_sensors(args.sensors)
    actuals = io.read_counts(args.counts)
    forecasts = io.read_forecasts(args.forecasts)
    setup = _build_setup(cfg.scan.scan_type, cfg, sensors, args)
    from .scan import scan as run_scan

    result = run_scan(
        setup.regions,
        forecasts,
        actuals,
        metric=cfg.scan.metric,
        bound_mode=cfg.scan.bound_mode,
        max_window_hours=cfg.forecast.horizon_hours,
        window_stride=cfg.scan.time_window_stride,
        all_windows=cfg.scan.all_windows,
    )
    null = _select_null(args, cfg)
    io.write_scores(result, args.out, null=null, percentile=cfg.scan.percentile)
    if args.out_grid:
        if cfg.scan.scan_type != "pl":
            raise InputError("--out-grid applies to planar scans only")
        bbox, _ = _load_boundary_bbox(args, sensors)
        io.write_grid_csv(build_grid(bbox, cfg.scan.grid_n), args.out_grid)
    top = result.top()
    if top is None:
        logger.warning("scan: no scored regions")
    else:
        logger.info("scan: top region %s [%s..%s] score=%r",
                    top.key, hour_to_iso(top.t_start), hour_to_iso(top.t_end), top.score)
    return 0


def cmd_calibrate(args, cfg: RunConfig) -> int:
    sensors, _ = _read_or_make_sensors(args, cfg)
    scan_types = [s.strip() for s in args.scan_types.split(",") if s.strip()]
    for scan_type in scan_types:
        if scan_type not in ("pl", "net"):
            raise InputError(f"unknown scan type {scan_type!r}")
    setups = [_build_setup(scan_type, cfg, sensors, args) for scan_type in scan_types]
    data = generate_surge_free(sensors, cfg.sim_config())
    nulls = calibrate_null(
        data, setups, cfg.forecast_settings(),
        n_days=cfg.evaluate.null_days, threads=cfg.threads,
    )
    io.write_null(nulls, args.out)
    if args.out_thresholds:
        io.write_thresholds(nulls, cfg.scan.percentile, args.out_thresholds)
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    sensors, _ = _read_or_make_sensors(args, cfg)
    scan_types = [s.strip() for s in args.scan_types.split(",") if s.strip()]
    setups = [_build_setup(scan_type, cfg, sensors, args) for scan_type in scan_types]
    method = cfg.forecast.method
    stored = io.read_null(args.null)
    nulls = {}
    for setup in setups:
        key = (setup.scan_type, setup.metric)
        if key not in stored:
            raise CalibrationError(
                f"null file lacks samples for scan_type={key[0]} metric={key[1]}"
            )
        nulls[(setup.scan_type, method)] = stored[key]
    bbox, _ = _load_boundary_bbox(args, sensors)
    report = run_benchmark(
        sensors,
        cfg.sim_config(),
        setups,
        [method],
        nulls,
        n_trials=cfg.evaluate.n_trials,
        bbox=bbox,
        percentile=cfg.scan.percentile,
        k_min=cfg.surge.k_min,
        k_max=cfg.surge.k_max,
        surge_days=cfg.surge.days,
        lambda_cap=cfg.surge.lambda_cap,
        settings=cfg.forecast_settings(),
        threads=cfg.threads,
    )
    if args.no_timings:
        # wall-clock telemetry is the one artifact column that cannot be a
        # pure function of (config, seed); zero it for reproducible runs
        trials = tuple(
            dataclasses.replace(t, forecast_secs=0.0, scan_secs=0.0)
            for t in report.trials
        )
        report = dataclasses.replace(
            report,
            trials=trials,
            aggregates=tuple(aggregate_trials(trials, seed=cfg.seed)),
        )
    io.write_trials(report.trials, args.out)
    if args.report:
        _write_report(report, args.report)
    return 0


def _write_report(report, path: str) -> None:
    path = Path(path)
    lines = [
        f"trials requested: {report.n_requested}  failed: {report.n_failed}",
    ]
    for agg in report.aggregates:
        lines.append(
            f"scan={agg.scan_type} forecast={agg.forecast_method} n={agg.n_trials} "
            f"detection_rate={agg.detection_rate:.3f} "
            f"precision={agg.mean_precision:.3f} ci=({agg.precision_ci[0]:.3f},{agg.precision_ci[1]:.3f}) "
            f"recall={agg.mean_recall:.3f} ci=({agg.recall_ci[0]:.3f},{agg.recall_ci[1]:.3f}) "
            f"day_scores={','.join(f'{s:.3f}' for s in agg.mean_day_scores)} "
            f"forecast_secs={agg.mean_forecast_secs:.2f} scan_secs={agg.mean_scan_secs:.2f}"
        )
    with io.atomic_write(path) as handle:
        handle.write("\n".join(lines) + "\n")
    summary = {
        "n_requested": report.n_requested,
        "n_failed": report.n_failed,
        "aggregates": [dataclasses.asdict(a) for a in report.aggregates],
    }
    with io.atomic_write(path.with_suffix(".json")) as handle:
        json.dump(summary, handle, sort_keys=True, indent=1)
        handle.write("\n")


def cmd_heatmap(args, cfg: RunConfig) -> int:
    scores = io.read_scores(args.scores)
    pairs = [(row["region_key"], row["raw"]) for row in scores]
    if not pairs:
        with io.atomic_write(args.out) as handle:
            json.dump({"type": "FeatureCollection", "features": []}, handle,
                      sort_keys=True, indent=1)
            handle.write("\n")
        return 0
    kind = pairs[0][0].partition(":")[0]
    if kind == "rect":
        sensors = io.read_sensors(args.sensors) if args.sensors else []
        bbox, _ = _load_boundary_bbox(args, sensors)
        grid = build_grid(bbox, cfg.scan.grid_n)
        io.write_heatmap_cells(heatmap_cells(pairs), grid, args.out)
    elif kind == "path":
        if not args.network:
            raise InputError("segment heatmaps need --network")
        network = io.read_network(args.network)
        segments = segment_network(network, cfg.scan.segment_len_m)
        io.write_heatmap_segments(heatmap_segments(pairs), segments, args.out)
    else:
        raise InputError(f"unrecognized region keys in scores file: {pairs[0][0]!r}")
    return 0


def cmd_make_network(args, cfg: RunConfig) -> int:
    network = block_network(args.cols, args.rows, args.block_len_m)
    io.write_network_csv(network, args.out)
    return 0


def _add_spatial_args(parser, boundary=True, network=True, sensors=True):
    if sensors:
        parser.add_argument("--sensors", help="sensor CSV (sensor_id,lon,lat[,direction])")
    if boundary:
        parser.add_argument("--boundary", help="GeoJSON Polygon/MultiPolygon boundary")
    if network:
        parser.add_argument("--network", help="road network (GeoJSON LineStrings or edge CSV)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surgescan",
        description="Expectation-based spatio-temporal scan statistics "
                    "on planar grids and road networks.",
    )
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--threads", type=int, help="worker cap for parallel stages")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate surge-free (optionally surged) counts")
    _add_spatial_args(p)
    p.add_argument("--make-sensors", type=int, metavar="N",
                   help="generate N sensors instead of reading --sensors")
    p.add_argument("--out-sensors", help="where to write generated sensors")
    p.add_argument("--inject-surge", action="store_true")
    p.add_argument("--out-truth", help="CSV of surged sensor ids")
    p.add_argument("--out", required=True, help="counts CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("forecast", help="fit baselines for the most recent horizon")
    p.add_argument("--counts", required=True)
    p.add_argument("--forecast-start", help="ISO hour; default = horizon before the data end")
    p.add_argument("--no-preprocess", action="store_true",
                   help="skip gap interpolation and anomaly removal")
    p.add_argument("--out", required=True, help="forecast CSV")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("scan", help="score all search regions on the forecast horizon")
    _add_spatial_args(p)
    p.add_argument("--counts", required=True)
    p.add_argument("--forecasts", required=True)
    p.add_argument("--null", help="null CSV for corrected scores")
    p.add_argument("--scan-type", choices=("pl", "net"), help="override scan.scan_type")
    p.add_argument("--max-rect-size", type=int, help="cap rectangle side length (cells)")
    p.add_argument("--time-window-stride", type=int, help="subsample window lengths")
    p.add_argument("--out-grid", help="also export the grid cell boundaries CSV")
    p.add_argument("--out", required=True, help="scores CSV")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("calibrate", help="build the empirical null on surge-free data")
    _add_spatial_args(p)
    p.add_argument("--make-sensors", type=int, metavar="N")
    p.add_argument("--scan-types", default="pl", help="comma list: pl,net")
    p.add_argument("--out", required=True, help="null CSV")
    p.add_argument("--out-thresholds", help="derived thresholds CSV")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="run the paired simulated-surge benchmark")
    _add_spatial_args(p)
    p.add_argument("--make-sensors", type=int, metavar="N")
    p.add_argument("--scan-types", default="pl", help="comma list: pl,net")
    p.add_argument("--null", required=True, help="null CSV from calibrate")
    p.add_argument("--out", required=True, help="trials CSV")
    p.add_argument("--report", help="report text file (a .json twin is written too)")
    p.add_argument("--no-timings", action="store_true",
                   help="write zeroed wall-clock columns for byte-reproducible output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("heatmap", help="aggregate scores by mean onto cells or segments")
    _add_spatial_args(p)
    p.add_argument("--scores", required=True)
    p.add_argument("--out", required=True, help="GeoJSON heatmap")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("make-network", help="write a synthetic block-lattice network CSV")
    p.add_argument("--cols", type=int, default=8)
    p.add_argument("--rows", type=int, default=5)
    p.add_argument("--block-len-m", type=float, default=300.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_network)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, {"seed": args.seed, "threads": args.threads})
        cfg.log_resolved()
        return args.func(args, cfg)
    except SurgeScanError as exc:
        print(f"{exc.label}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"input-error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
