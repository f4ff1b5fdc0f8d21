"""Planar grids over a boundary's bounding box and rectangular search regions."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError
from .network import SensorPlacement

logger = logging.getLogger(__name__)

DEFAULT_GRID_N = 8


@dataclass(frozen=True)
class PlanarGrid:
    """An N-by-N grid of half-open cells over a bounding box.

    Cell (ix, iy) spans [lon_edges[ix], lon_edges[ix+1]) by
    [lat_edges[iy], lat_edges[iy+1]); the last cell on each axis is closed so
    the cells partition the box exactly.
    """

    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float
    n: int
    lon_edges: np.ndarray
    lat_edges: np.ndarray

    @classmethod
    def from_bbox(cls, bbox: tuple[float, float, float, float], n: int) -> "PlanarGrid":
        min_lon, min_lat, max_lon, max_lat = (float(v) for v in bbox)
        if n < 1:
            raise ValueError("grid resolution must be >= 1")
        if not (max_lon > min_lon and max_lat > min_lat):
            raise InputError("degenerate boundary: bounding box has zero area")
        return cls(
            min_lon,
            min_lat,
            max_lon,
            max_lat,
            int(n),
            np.linspace(min_lon, max_lon, n + 1),
            np.linspace(min_lat, max_lat, n + 1),
        )

    def cell_indices(self, lons, lats) -> np.ndarray:
        """(ix, iy) per point, or (-1, -1) for points outside the box.

        Points on an interior cell boundary belong to the higher-index cell;
        the box's outer maximum edge belongs to the last cell.
        """
        lons = np.asarray(lons, dtype=np.float64)
        lats = np.asarray(lats, dtype=np.float64)
        ix = np.searchsorted(self.lon_edges, lons, side="right") - 1
        iy = np.searchsorted(self.lat_edges, lats, side="right") - 1
        ix = np.where(lons == self.max_lon, self.n - 1, ix)
        iy = np.where(lats == self.max_lat, self.n - 1, iy)
        inside = (ix >= 0) & (ix < self.n) & (iy >= 0) & (iy < self.n)
        return np.stack([np.where(inside, ix, -1), np.where(inside, iy, -1)], axis=-1)

    def cell_of(self, lon: float, lat: float) -> tuple[int, int] | None:
        ix, iy = self.cell_indices([lon], [lat])[0]
        if ix < 0:
            return None
        return int(ix), int(iy)

    def cell_polygon(self, ix: int, iy: int) -> list[tuple[float, float]]:
        """Closed ring of the cell's corners, counter-clockwise."""
        x0, x1 = float(self.lon_edges[ix]), float(self.lon_edges[ix + 1])
        y0, y1 = float(self.lat_edges[iy]), float(self.lat_edges[iy + 1])
        return [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]


def build_grid(bbox: tuple[float, float, float, float], n: int = DEFAULT_GRID_N) -> PlanarGrid:
    """Grid over a boundary's axis-aligned bounding box."""
    return PlanarGrid.from_bbox(bbox, n)


def assign_cells(grid: PlanarGrid, sensors: Sequence[SensorPlacement]) -> dict[tuple[int, int], list[str]]:
    """Map each grid cell to the sensor ids inside it.

    Sensors outside the bounding box are excluded (with a logged count): the
    box defines the planar search domain.
    """
    cells: dict[tuple[int, int], list[str]] = {}
    outside = 0
    for sensor in sensors:
        cell = grid.cell_of(sensor.lon, sensor.lat)
        if cell is None:
            outside += 1
            continue
        cells.setdefault(cell, []).append(sensor.sensor_id)
    if outside:
        logger.info("assign_cells: %d sensors outside the bounding box excluded", outside)
    for members in cells.values():
        members.sort()
    return cells


@dataclass(frozen=True)
class GridRectangle:
    """An axis-aligned rectangle of whole cells with its member sensors."""

    x0: int
    x1: int
    y0: int
    y1: int
    member_ids: tuple[str, ...]

    def __post_init__(self):
        if not (0 <= self.x0 <= self.x1 and 0 <= self.y0 <= self.y1):
            raise ValueError("rectangle index ranges must be ordered and non-negative")

    @property
    def key_str(self) -> str:
        return f"{self.x0}-{self.x1}.{self.y0}-{self.y1}"

    @property
    def size(self) -> int:
        return (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)

    def cells(self):
        for ix in range(self.x0, self.x1 + 1):
            for iy in range(self.y0, self.y1 + 1):
                yield (ix, iy)


def enumerate_rectangles(
    grid: PlanarGrid,
    sensors: Sequence[SensorPlacement],
    max_rect_size: int | None = None,
) -> list[GridRectangle]:
    """All (N(N+1)/2)^2 cell rectangles, each carrying its member sensors.

    ``max_rect_size`` optionally caps the rectangle side length in cells,
    yielding a cheaper subset of the search family.
    """
    cells = assign_cells(grid, sensors)
    n = grid.n
    out: list[GridRectangle] = []
    for x0 in range(n):
        for x1 in range(x0, n):
            if max_rect_size is not None and x1 - x0 + 1 > max_rect_size:
                continue
            for y0 in range(n):
                for y1 in range(y0, n):
                    if max_rect_size is not None and y1 - y0 + 1 > max_rect_size:
                        continue
                    members: list[str] = []
                    for ix in range(x0, x1 + 1):
                        for iy in range(y0, y1 + 1):
                            members.extend(cells.get((ix, iy), ()))
                    out.append(GridRectangle(x0, x1, y0, y1, tuple(sorted(members))))
    return out
