"""Segmented road networks: construction, sensor snapping, path enumeration.

Coordinates are (lon, lat) in degrees; lengths are metres. Snapping distances
are Euclidean in raw degree space, matching the tolerance units used for
sensor placement (note the anisotropy away from the equator: one degree of
longitude shrinks with latitude, so degree-space distances are not isotropic
metres).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError, PathCapError

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
# Vertex coordinates are matched on a 1e-9-degree lattice when deriving
# segment adjacency.
_LATTICE_DEG = 1e-9

DEFAULT_SEGMENT_LEN_M = 100.0
DEFAULT_SNAP_TOLERANCE_DEG = 5e-4
DEFAULT_PATH_CAP = 1_000_000

FORWARD = "forward"
REVERSE = "reverse"
DIRECTIONS = (FORWARD, REVERSE)


def haversine_m(lon1: float, lat1: float, lon2: float, lat2: float) -> float:
    """Great-circle distance in metres."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def polyline_length_m(coords: Sequence[tuple[float, float]]) -> float:
    return sum(
        haversine_m(coords[i][0], coords[i][1], coords[i + 1][0], coords[i + 1][1])
        for i in range(len(coords) - 1)
    )


def lattice_key(lon: float, lat: float) -> tuple[int, int]:
    return (round(lon / _LATTICE_DEG), round(lat / _LATTICE_DEG))


@dataclass(frozen=True)
class RoadEdge:
    edge_id: str
    u: int
    v: int
    geometry: tuple[tuple[float, float], ...]
    length_m: float
    oneway: bool = False


@dataclass(frozen=True)
class RoadNetwork:
    """A street graph: vertices (id, lon, lat) and polyline edges."""

    vertices: tuple[tuple[int, float, float], ...]
    edges: tuple[RoadEdge, ...]

    def __post_init__(self):
        vertex_ids = {v[0] for v in self.vertices}
        if len(vertex_ids) != len(self.vertices):
            raise InputError("duplicate vertex ids in network")
        seen = set()
        for edge in self.edges:
            if edge.edge_id in seen:
                raise InputError(f"duplicate edge id {edge.edge_id!r}")
            seen.add(edge.edge_id)
            if edge.u not in vertex_ids or edge.v not in vertex_ids:
                raise InputError(f"edge {edge.edge_id!r} references a missing vertex")
            if not edge.length_m > 0:
                raise InputError(f"edge {edge.edge_id!r} has non-positive length")
            if len(edge.geometry) < 2:
                raise InputError(f"edge {edge.edge_id!r} has a degenerate geometry")

    @classmethod
    def from_edge_rows(cls, rows: Iterable[tuple[str, float, float, float, float, float]]) -> "RoadNetwork":
        """Build from (edge_id, from_lon, from_lat, to_lon, to_lat, length_m) rows.

        Vertices are deduplicated on the coordinate lattice.
        """
        vertex_of: dict[tuple[int, int], int] = {}
        vertices: list[tuple[int, float, float]] = []
        edges: list[RoadEdge] = []

        def vertex(lon: float, lat: float) -> int:
            key = lattice_key(lon, lat)
            if key not in vertex_of:
                vertex_of[key] = len(vertices)
                vertices.append((len(vertices), lon, lat))
            return vertex_of[key]

        for edge_id, flon, flat, tlon, tlat, length_m in rows:
            u = vertex(flon, flat)
            v = vertex(tlon, tlat)
            edges.append(RoadEdge(str(edge_id), u, v, ((flon, flat), (tlon, tlat)), float(length_m)))
        return cls(tuple(vertices), tuple(edges))

    @classmethod
    def from_linestrings(
        cls, features: Iterable[tuple[str, Sequence[tuple[float, float]], bool]]
    ) -> "RoadNetwork":
        """Build from (edge_id, coords, oneway) LineString features.

        Edge lengths are great-circle polyline lengths.
        """
        vertex_of: dict[tuple[int, int], int] = {}
        vertices: list[tuple[int, float, float]] = []
        edges: list[RoadEdge] = []

        def vertex(lon: float, lat: float) -> int:
            key = lattice_key(lon, lat)
            if key not in vertex_of:
                vertex_of[key] = len(vertices)
                vertices.append((len(vertices), lon, lat))
            return vertex_of[key]

        for edge_id, coords, oneway in features:
            coords = tuple((float(lon), float(lat)) for lon, lat in coords)
            if len(coords) < 2:
                raise InputError(f"edge {edge_id!r} has fewer than 2 coordinates")
            u = vertex(*coords[0])
            v = vertex(*coords[-1])
            length = polyline_length_m(coords)
            if not length > 0:
                raise InputError(f"edge {edge_id!r} has zero geometric length")
            edges.append(RoadEdge(str(edge_id), u, v, coords, length, bool(oneway)))
        return cls(tuple(vertices), tuple(edges))

    def total_length_m(self) -> float:
        return sum(edge.length_m for edge in self.edges)


@dataclass(frozen=True)
class Segment:
    """An approximately target-length piece of one edge."""

    segment_id: int
    edge_id: str
    geometry: tuple[tuple[float, float], ...]
    length_m: float
    adjacent: tuple[int, ...]

    @property
    def start_key(self) -> tuple[int, int]:
        return lattice_key(*self.geometry[0])

    @property
    def end_key(self) -> tuple[int, int]:
        return lattice_key(*self.geometry[-1])

    def endpoint_keys(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return (self.start_key, self.end_key)


def _cut_polyline(coords: Sequence[tuple[float, float]], pieces: int) -> list[tuple[tuple[float, float], ...]]:
    """Split a polyline into `pieces` parts of equal geometric arc length."""
    if pieces == 1:
        return [tuple(coords)]
    legs = [
        haversine_m(coords[i][0], coords[i][1], coords[i + 1][0], coords[i + 1][1])
        for i in range(len(coords) - 1)
    ]
    total = sum(legs)
    cuts = [total * j / pieces for j in range(1, pieces)]
    out: list[tuple[tuple[float, float], ...]] = []
    current: list[tuple[float, float]] = [tuple(coords[0])]
    walked = 0.0
    cut_iter = iter(cuts)
    next_cut = next(cut_iter)
    for i, leg in enumerate(legs):
        a, b = coords[i], coords[i + 1]
        leg_start = walked
        while next_cut is not None and leg > 0 and leg_start + leg >= next_cut:
            frac = (next_cut - leg_start) / leg
            point = (a[0] + frac * (b[0] - a[0]), a[1] + frac * (b[1] - a[1]))
            current.append(point)
            out.append(tuple(current))
            current = [point]
            next_cut = next(cut_iter, None)
        current.append(tuple(b))
        walked += leg
    out.append(tuple(current))
    # Floating-point walk may in rare cases leave a cut unconsumed at the very
    # end; fold any surplus piece into the last one to preserve the count.
    while len(out) > pieces:
        tail = out.pop()
        out[-1] = out[-1][:-1] + tail
    return out


def segment_network(network: RoadNetwork, target_len_m: float = DEFAULT_SEGMENT_LEN_M) -> list[Segment]:
    """Split every edge into ceil(len/target) equal-length segments.

    Adjacency links segments sharing an endpoint on the coordinate lattice.
    """
    if not target_len_m > 0:
        raise ValueError("target segment length must be positive")
    if not network.edges:
        raise InputError("network has no edges")
    raw: list[tuple[str, tuple[tuple[float, float], ...], float]] = []
    for edge in network.edges:
        if not edge.length_m > 0:
            raise InputError(f"edge {edge.edge_id!r} has non-positive length")
        pieces = max(1, math.ceil(edge.length_m / target_len_m))
        piece_len = edge.length_m / pieces
        for geometry in _cut_polyline(edge.geometry, pieces):
            raw.append((edge.edge_id, geometry, piece_len))

    by_endpoint: dict[tuple[int, int], list[int]] = {}
    for idx, (_, geometry, _) in enumerate(raw):
        for key in (lattice_key(*geometry[0]), lattice_key(*geometry[-1])):
            by_endpoint.setdefault(key, []).append(idx)

    segments = []
    for idx, (edge_id, geometry, piece_len) in enumerate(raw):
        neighbours: set[int] = set()
        for key in (lattice_key(*geometry[0]), lattice_key(*geometry[-1])):
            neighbours.update(by_endpoint[key])
        neighbours.discard(idx)
        segments.append(Segment(idx, edge_id, geometry, piece_len, tuple(sorted(neighbours))))
    return segments


@dataclass(frozen=True)
class SensorPlacement:
    """A sensor's planar location and (optionally) its snap onto a segment."""

    sensor_id: str
    lon: float
    lat: float
    direction: str | None = None
    segment_id: int | None = None
    snap_distance_deg: float | None = None

    def __post_init__(self):
        if self.direction is not None and self.direction not in DIRECTIONS:
            raise ValueError(f"sensor {self.sensor_id}: bad direction {self.direction!r}")

    @property
    def snapped(self) -> bool:
        return self.segment_id is not None


def _point_to_polyline_deg(lon: float, lat: float, geometry) -> float:
    """Euclidean degree-space distance from a point to a polyline."""
    best = math.inf
    for i in range(len(geometry) - 1):
        (x1, y1), (x2, y2) = geometry[i], geometry[i + 1]
        dx, dy = x2 - x1, y2 - y1
        denom = dx * dx + dy * dy
        if denom == 0.0:
            t = 0.0
        else:
            t = ((lon - x1) * dx + (lat - y1) * dy) / denom
            t = min(1.0, max(0.0, t))
        px, py = x1 + t * dx, y1 + t * dy
        d = math.hypot(lon - px, lat - py)
        if d < best:
            best = d
    return best


def snap_sensors(
    sensors: Sequence[SensorPlacement],
    segments: Sequence[Segment],
    tolerance_deg: float = DEFAULT_SNAP_TOLERANCE_DEG,
) -> list[SensorPlacement]:
    """Assign each sensor its nearest segment within the snap tolerance.

    Sensors beyond the tolerance come back unsnapped (excluded from network
    scans but still usable on the planar grid). Equidistant segments tie-break
    to the smaller segment id.
    """
    if tolerance_deg < 0:
        raise ValueError("snap tolerance must be non-negative")
    ordered = sorted(segments, key=lambda s: s.segment_id)
    out = []
    for sensor in sensors:
        best_id = None
        best_d = math.inf
        for segment in ordered:
            d = _point_to_polyline_deg(sensor.lon, sensor.lat, segment.geometry)
            if d < best_d:
                best_d = d
                best_id = segment.segment_id
        if best_id is not None and best_d <= tolerance_deg:
            out.append(replace(sensor, segment_id=best_id, snap_distance_deg=best_d))
        else:
            out.append(replace(sensor, segment_id=None,
                               snap_distance_deg=best_d if math.isfinite(best_d) else None))
    n_unsnapped = sum(1 for s in out if not s.snapped)
    if n_unsnapped:
        logger.info("snap_sensors: %d of %d sensors beyond tolerance", n_unsnapped, len(out))
    return out


@dataclass(frozen=True)
class SegmentPath:
    """A simple, contiguous run of segments (a network search region).

    The canonical key is the sorted tuple of segment ids, shared by a path
    and its reversal.
    """

    segment_ids: tuple[int, ...]
    length_m: float
    key: tuple[int, ...]

    @property
    def key_str(self) -> str:
        return "+".join(str(i) for i in self.key)

    @property
    def size(self) -> int:
        return len(self.segment_ids)

    def reversed(self) -> "SegmentPath":
        return SegmentPath(tuple(reversed(self.segment_ids)), self.length_m, self.key)


def enumerate_paths(
    segments: Sequence[Segment],
    l_min_m: float,
    l_max_m: float,
    max_paths: int = DEFAULT_PATH_CAP,
) -> list[SegmentPath]:
    """All simple segment paths with total length in [l_min_m, l_max_m].

    Depth-first search from every segment, extending only to adjacent unused
    segments and pruning once the length bound is exceeded. Paths are
    deduplicated by canonical key (a path and its reversal count once) and
    returned sorted by that key.
    """
    if not (0 <= l_min_m < l_max_m):
        raise ValueError("require 0 <= l_min < l_max")
    by_id = {s.segment_id: s for s in segments}
    found: dict[tuple[int, ...], SegmentPath] = {}

    def emit(stack: list[int], length: float):
        key = tuple(sorted(stack))
        if key not in found:
            found[key] = SegmentPath(tuple(stack), length, key)
            if len(found) > max_paths:
                raise PathCapError(count=len(found), cap=max_paths)

    def extend(stack: list[int], used: set[int], length: float):
        if length >= l_min_m:
            emit(stack, length)
        last = by_id[stack[-1]]
        for nxt in last.adjacent:
            if nxt in used:
                continue
            new_len = length + by_id[nxt].length_m
            if new_len > l_max_m:
                continue
            stack.append(nxt)
            used.add(nxt)
            extend(stack, used, new_len)
            used.remove(nxt)
            stack.pop()

    for start in sorted(by_id):
        seg = by_id[start]
        if seg.length_m > l_max_m:
            continue
        extend([start], {start}, seg.length_m)
    return [found[key] for key in sorted(found)]


def path_orientations(path: SegmentPath, segments_by_id: Mapping[int, Segment]) -> list[int]:
    """Traversal orientation (+1 along the segment geometry, -1 against) per segment.

    Single-segment paths traverse along the geometry. For each later segment
    the entry endpoint is the one shared with its predecessor; the first
    segment's entry is its endpoint not shared with the second.
    """
    segs = [segments_by_id[i] for i in path.segment_ids]
    if len(segs) == 1:
        return [1]
    orientations: list[int] = []
    first, second = segs[0], segs[1]
    shared = set(first.endpoint_keys()) & set(second.endpoint_keys())
    if first.start_key in shared and first.end_key not in shared:
        entry = first.end_key
    elif first.end_key in shared and first.start_key not in shared:
        entry = first.start_key
    else:
        entry = first.start_key
    orientations.append(1 if entry == first.start_key else -1)
    exit_key = first.end_key if orientations[0] == 1 else first.start_key
    for prev, seg in zip(segs, segs[1:]):
        shared = set(prev.endpoint_keys()) & set(seg.endpoint_keys())
        entry = exit_key if exit_key in shared else min(shared)
        orientation = 1 if entry == seg.start_key else -1
        orientations.append(orientation)
        exit_key = seg.end_key if orientation == 1 else seg.start_key
    return orientations


@dataclass(frozen=True)
class PathMembers:
    """Sensors on a path: everyone, and the split by travel direction."""

    undirected: tuple[str, ...]
    forward: tuple[str, ...]
    reverse: tuple[str, ...]


def path_members(
    path: SegmentPath,
    sensors: Sequence[SensorPlacement],
    segments: Sequence[Segment] | Mapping[int, Segment],
) -> PathMembers:
    """Partition a path's snapped sensors by direction of travel.

    Direction-less sensors count in both directional sets; a sensor's own
    direction is relative to its segment's geometry, and the directional sets
    are relative to the path's traversal orientation (so reversing the path
    swaps them).
    """
    if isinstance(segments, Mapping):
        by_id = dict(segments)
    else:
        by_id = {s.segment_id: s for s in segments}
    orientation_of = dict(zip(path.segment_ids, path_orientations(path, by_id)))
    undirected, forward, reverse = [], [], []
    for sensor in sensors:
        if sensor.segment_id not in orientation_of:
            continue
        undirected.append(sensor.sensor_id)
        orientation = orientation_of[sensor.segment_id]
        if sensor.direction is None:
            forward.append(sensor.sensor_id)
            reverse.append(sensor.sensor_id)
            continue
        along = (sensor.direction == FORWARD and orientation == 1) or (
            sensor.direction == REVERSE and orientation == -1
        )
        (forward if along else reverse).append(sensor.sensor_id)
    return PathMembers(
        tuple(sorted(undirected)), tuple(sorted(forward)), tuple(sorted(reverse))
    )
