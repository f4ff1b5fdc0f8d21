import numpy as np
import pytest

from surgescan.network import RoadNetwork, Segment, SensorPlacement
from surgescan.series import SensorSeries


def make_series(sensor_id="s0", counts=None, t0=440_000, n=None):
    """Contiguous hourly series starting at epoch hour t0."""
    if counts is None:
        counts = np.full(n or 48, 10, dtype=np.int64)
    counts = np.asarray(counts, dtype=np.int64)
    return SensorSeries(sensor_id, t0 + np.arange(counts.size, dtype=np.int64), counts)


def make_segments(adjacency: dict[int, list[int]], lengths: dict[int, float]):
    """Segments with synthetic adjacency (geometry is a placeholder)."""
    return [
        Segment(
            segment_id=i,
            edge_id=f"e{i}",
            geometry=((float(i), 0.0), (float(i) + 1.0, 0.0)),
            length_m=lengths[i],
            adjacent=tuple(sorted(adjacency[i])),
        )
        for i in sorted(adjacency)
    ]


def chain_segments(n: int, seg_len: float = 100.0):
    adjacency = {i: [] for i in range(n)}
    for i in range(n - 1):
        adjacency[i].append(i + 1)
        adjacency[i + 1].append(i)
    return make_segments(adjacency, {i: seg_len for i in range(n)})


def triangle_network(side_m: float = 100.0) -> RoadNetwork:
    # Coordinates are only used for endpoint matching; lengths are declared.
    rows = [
        ("a", 0.0, 0.0, 0.001, 0.0, side_m),
        ("b", 0.001, 0.0, 0.0, 0.001, side_m),
        ("c", 0.0, 0.001, 0.0, 0.0, side_m),
    ]
    return RoadNetwork.from_edge_rows(rows)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def sensor(sensor_id, lon, lat, direction=None):
    return SensorPlacement(sensor_id, lon, lat, direction=direction)
