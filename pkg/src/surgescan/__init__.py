"""Expectation-based spatio-temporal scan statistics on grids and road networks."""

from .forecast import (
    ForecastSettings,
    HwParams,
    fit_holt_winters,
    forecast_holt_winters,
    hw_filter,
    make_forecasts,
    preprocess,
)
from .gp import GpConfig, GpParams, fit_gp, forecast_gp
from .grid import GridRectangle, PlanarGrid, build_grid, enumerate_rectangles
from .metrics import (
    NullDistribution,
    RegionAggregates,
    asym_score,
    corrected_score,
    ebp_log_score,
    ebp_score,
    nearest_rank,
    region_score,
)
from .network import (
    RoadNetwork,
    Segment,
    SegmentPath,
    SensorPlacement,
    enumerate_paths,
    path_members,
    segment_network,
    snap_sensors,
)
from .scan import (
    RegionScore,
    ScanRegion,
    ScanResult,
    heatmap,
    regions_from_paths,
    regions_from_rectangles,
    scan,
    top_region,
)
from .series import ForecastSeries, SensorSeries
from .simulate import (
    ScanSetup,
    SimConfig,
    SurgeSpec,
    calibrate_null,
    draw_surge_spec,
    generate_surge_free,
    inject_surge,
)
from .evaluate import (
    BenchmarkReport,
    TrialResult,
    detection_day,
    run_benchmark,
    spatial_precision_recall,
)

__version__ = "0.1.0"
