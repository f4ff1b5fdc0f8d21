"""Declarative run configuration: YAML with strict key checking.

Defaults follow the reference setup: an 8x8 grid, a 48-hour scan horizon,
50m-1km path bounds, 21 training days, 3-sigma forecast bands and the 99th
alarm percentile.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .forecast import ForecastSettings
from .series import iso_to_hour
from .simulate import SimConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForecastSection:
    method: str = "hw"
    sigma_k: float = 3.0
    train_days: int = 21
    horizon_hours: int = 48
    max_gap_hours: int = 6
    min_coverage: float = 0.8
    gp_restarts: int = 3
    gp_max_iter: int = 100

    def __post_init__(self):
        if self.method not in ("hw", "gp"):
            raise ConfigError(f"forecast.method must be hw or gp, got {self.method!r}")


@dataclass(frozen=True)
class ScanSection:
    scan_type: str = "pl"
    metric: str = "ebp"
    bound_mode: str = "mean"
    grid_n: int = 8
    max_rect_size: int | None = None
    segment_len_m: float = 100.0
    path_min_m: float = 50.0
    path_max_m: float = 1000.0
    snap_tolerance_deg: float = 5e-4
    max_paths: int = 1_000_000
    directed: bool = False
    time_window_stride: int = 1
    all_windows: bool = False
    percentile: float = 99.0

    def __post_init__(self):
        if self.scan_type not in ("pl", "net"):
            raise ConfigError(f"scan.scan_type must be pl or net, got {self.scan_type!r}")
        if self.metric not in ("ebp", "asym"):
            raise ConfigError(f"scan.metric must be ebp or asym, got {self.metric!r}")
        if self.bound_mode not in ("mean", "upper", "lower"):
            raise ConfigError(f"scan.bound_mode must be mean/upper/lower, got {self.bound_mode!r}")
        if not 0 < self.percentile <= 100:
            raise ConfigError("scan.percentile must be in (0, 100]")


@dataclass(frozen=True)
class SimulateSection:
    days_total: int = 122
    train_days: int = 21
    daily_amplitude: float = 0.5
    weekly_amplitude: float = 0.2
    base_min: float = 5.0
    base_max: float = 100.0
    amplitude_percentile: float = 90.0
    start: str = "2020-04-01T00:00:00Z"


@dataclass(frozen=True)
class SurgeSection:
    k_min: int = 10
    k_max: int = 100
    days: int = 3
    lambda_cap: float = 4.0

    def __post_init__(self):
        if not 1 <= self.k_min <= self.k_max:
            raise ConfigError("surge.k_min/k_max must satisfy 1 <= k_min <= k_max")


@dataclass(frozen=True)
class EvaluateSection:
    n_trials: int = 20
    null_days: int = 101


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    threads: int = 1
    forecast: ForecastSection = field(default_factory=ForecastSection)
    scan: ScanSection = field(default_factory=ScanSection)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    surge: SurgeSection = field(default_factory=SurgeSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)

    def forecast_settings(self) -> ForecastSettings:
        return ForecastSettings(
            method=self.forecast.method,
            sigma_k=self.forecast.sigma_k,
            train_days=self.forecast.train_days,
            horizon_hours=self.forecast.horizon_hours,
            gp_restarts=self.forecast.gp_restarts,
            gp_max_iter=self.forecast.gp_max_iter,
        )

    def sim_config(self) -> SimConfig:
        s = self.simulate
        return SimConfig(
            days_total=s.days_total,
            train_days=s.train_days,
            daily_amplitude=s.daily_amplitude,
            weekly_amplitude=s.weekly_amplitude,
            base_min=s.base_min,
            base_max=s.base_max,
            amplitude_percentile=s.amplitude_percentile,
            start_hour=iso_to_hour(s.start),
            seed=self.seed,
        )

    def resolved(self) -> dict:
        return asdict(self)

    def log_resolved(self):
        logger.info("resolved config: %s", json.dumps(self.resolved(), sort_keys=True))


def _coerce(value, target_type, path: str):
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if target_type is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    # optional ints (e.g. max_rect_size)
    if value is None or isinstance(value, int):
        return value
    raise ConfigError(f"{path}: unsupported value {value!r}")


def _merge(instance, data: dict, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a mapping")
    by_name = {f.name: f for f in fields(instance)}
    updates = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in by_name:
            raise ConfigError(f"unknown config key {path!r}")
        current = getattr(instance, key)
        if is_dataclass(current):
            updates[key] = _merge(current, value, path)
        else:
            ftype = by_name[key].type
            base = {"str": str, "int": int, "float": float, "bool": bool}.get(
                ftype if isinstance(ftype, str) else getattr(ftype, "__name__", ""), None
            )
            updates[key] = _coerce(value, base, path)
    return replace(instance, **updates)


def load_config(path: str | Path | None = None) -> RunConfig:
    """Load a YAML config file, rejecting unknown keys; None gives defaults."""
    config = RunConfig()
    if path is None:
        return config
    with open(path) as handle:
        try:
            data = yaml.safe_load(handle)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if data is None:
        return config
    return _merge(config, data)


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """Apply dotted-key overrides (e.g. {"scan.scan_type": "net"})."""
    for dotted, value in overrides.items():
        if value is None:
            continue
        parts = dotted.split(".")
        node: dict = {}
        leaf = node
        for part in parts[:-1]:
            leaf[part] = {}
            leaf = leaf[part]
        leaf[parts[-1]] = value
        config = _merge(config, node)
    return config
