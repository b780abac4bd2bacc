"""Square-cell grid partition of a city bounding box.

The grid is laid out in metres at the bounding box's mid-latitude: the
north-south and east-west extents are converted to metres there, divided by
the cell size, and rounded up, so every cell is exactly ``cell_size_m`` on a
side (the grid may overhang the bounding box on the top/right). Cells are
numbered row-major with row 0 at the minimum latitude:

    cell = row * n_cols + col

Cell membership is half-open on the south/west edges; points on the bounding
box's maximum edges fold into the last row/column so the box is fully covered.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidBoundsError, OutOfBoundsError

# Mean Earth radius, kilometres. Shared by every distance in the package.
EARTH_RADIUS_KM = 6371.0088

METERS_PER_DEG_LAT = EARTH_RADIUS_KM * 1000.0 * math.pi / 180.0
_METERS_PER_DEG_LAT = METERS_PER_DEG_LAT

# Relative slack when counting cells, so a box spanning exactly n * cell_size
# metres yields n cells instead of n + 1 after float round-trips.
_CEIL_EPS = 1e-9


@dataclass(frozen=True)
class Bounds:
    """Geographic bounding box in decimal degrees."""

    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def __post_init__(self):
        vals = (self.min_lat, self.min_lon, self.max_lat, self.max_lon)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidBoundsError(f"bounds must be finite, got {vals}")
        if not (-90.0 <= self.min_lat <= 90.0 and -90.0 <= self.max_lat <= 90.0):
            raise InvalidBoundsError("latitudes must lie in [-90, 90]")
        if not (-180.0 <= self.min_lon <= 180.0 and -180.0 <= self.max_lon <= 180.0):
            raise InvalidBoundsError("longitudes must lie in [-180, 180]")
        if self.min_lat >= self.max_lat or self.min_lon >= self.max_lon:
            raise InvalidBoundsError(
                "bounds must satisfy min_lat < max_lat and min_lon < max_lon"
            )

    @property
    def mid_lat(self) -> float:
        return (self.min_lat + self.max_lat) / 2.0

    def contains(self, lat: float, lon: float) -> bool:
        return (
            self.min_lat <= lat <= self.max_lat
            and self.min_lon <= lon <= self.max_lon
        )


@dataclass(frozen=True)
class Grid:
    """A built grid: bounds plus derived cell layout."""

    bounds: Bounds
    cell_size_m: float
    n_rows: int
    n_cols: int
    lat_step_deg: float
    lon_step_deg: float

    @property
    def n_cells(self) -> int:
        return self.n_rows * self.n_cols

    def to_payload(self) -> dict:
        return {
            "bounds": {
                "min_lat": self.bounds.min_lat,
                "min_lon": self.bounds.min_lon,
                "max_lat": self.bounds.max_lat,
                "max_lon": self.bounds.max_lon,
            },
            "cell_size_m": self.cell_size_m,
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "Grid":
        b = payload["bounds"]
        grid = build_grid(
            Bounds(b["min_lat"], b["min_lon"], b["max_lat"], b["max_lon"]),
            float(payload["cell_size_m"]),
        )
        if grid.n_rows != payload["n_rows"] or grid.n_cols != payload["n_cols"]:
            raise InvalidBoundsError(
                "stored grid shape does not match rebuilt grid: "
                f"stored {payload['n_rows']}x{payload['n_cols']}, "
                f"rebuilt {grid.n_rows}x{grid.n_cols}"
            )
        return grid


def meters_per_deg_lon(lat_deg: float) -> float:
    return _METERS_PER_DEG_LAT * math.cos(math.radians(lat_deg))


def build_grid(bounds: Bounds, cell_size_m: float) -> Grid:
    """Partition ``bounds`` into square cells of side ``cell_size_m`` metres.

    Extents are measured at the mid-latitude of the box. Raises
    :class:`InvalidBoundsError` for non-positive cell sizes or boxes that
    degenerate to zero extent.
    """
    if not (math.isfinite(cell_size_m) and cell_size_m > 0):
        raise InvalidBoundsError(f"cell_size_m must be positive, got {cell_size_m}")
    ns_extent_m = (bounds.max_lat - bounds.min_lat) * _METERS_PER_DEG_LAT
    ew_extent_m = (bounds.max_lon - bounds.min_lon) * meters_per_deg_lon(bounds.mid_lat)
    if ns_extent_m <= 0 or ew_extent_m <= 0:
        raise InvalidBoundsError("bounding box has zero extent")
    n_rows = math.ceil(ns_extent_m / cell_size_m - _CEIL_EPS)
    n_cols = math.ceil(ew_extent_m / cell_size_m - _CEIL_EPS)
    if n_rows < 1 or n_cols < 1:
        raise InvalidBoundsError("bounding box smaller than one cell")
    lat_step = cell_size_m / _METERS_PER_DEG_LAT
    lon_step = cell_size_m / meters_per_deg_lon(bounds.mid_lat)
    return Grid(
        bounds=bounds,
        cell_size_m=float(cell_size_m),
        n_rows=n_rows,
        n_cols=n_cols,
        lat_step_deg=lat_step,
        lon_step_deg=lon_step,
    )


def cell_of(grid: Grid, lat: float, lon: float) -> int:
    """Map a coordinate to its cell id.

    Cells are half-open on their south/west edges; a point on an interior
    edge belongs to the higher-index cell. Points on the bounding box's max
    edges are folded into the last row/column. Raises
    :class:`OutOfBoundsError` for points outside the box.
    """
    if not grid.bounds.contains(lat, lon):
        raise OutOfBoundsError(
            f"point ({lat}, {lon}) lies outside bounds {grid.bounds}"
        )
    row = int((lat - grid.bounds.min_lat) / grid.lat_step_deg)
    col = int((lon - grid.bounds.min_lon) / grid.lon_step_deg)
    row = min(row, grid.n_rows - 1)
    col = min(col, grid.n_cols - 1)
    return row * grid.n_cols + col


def cell_center(grid: Grid, cell: int) -> tuple[float, float]:
    """Return the (lat, lon) centre of ``cell``."""
    if not 0 <= cell < grid.n_cells:
        raise ValueError(f"cell id {cell} out of range [0, {grid.n_cells})")
    row, col = divmod(cell, grid.n_cols)
    lat = grid.bounds.min_lat + (row + 0.5) * grid.lat_step_deg
    lon = grid.bounds.min_lon + (col + 0.5) * grid.lon_step_deg
    return lat, lon


def cell_centers(grid: Grid) -> np.ndarray:
    """Centres of all cells as an (n_cells, 2) array of (lat, lon)."""
    rows = np.arange(grid.n_rows, dtype=np.float64)
    cols = np.arange(grid.n_cols, dtype=np.float64)
    lats = grid.bounds.min_lat + (rows + 0.5) * grid.lat_step_deg
    lons = grid.bounds.min_lon + (cols + 0.5) * grid.lon_step_deg
    lat_grid, lon_grid = np.meshgrid(lats, lons, indexing="ij")
    return np.column_stack([lat_grid.ravel(), lon_grid.ravel()])


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in kilometres."""
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dphi = phi2 - phi1
    dlmb = math.radians(lon2 - lon1)
    a = (
        math.sin(dphi / 2.0) ** 2
        + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


def haversine_km_vec(lat: float, lon: float, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    """Great-circle distances from one point to many, kilometres."""
    phi1 = math.radians(lat)
    phi2 = np.radians(lats)
    dphi = phi2 - phi1
    dlmb = np.radians(lons - lon)
    a = np.sin(dphi / 2.0) ** 2 + math.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(a)))


def travel_cost_km(grid: Grid, cell_a: int, cell_b: int) -> float:
    """Travel cost between two cells: haversine distance of their centres."""
    lat1, lon1 = cell_center(grid, cell_a)
    lat2, lon2 = cell_center(grid, cell_b)
    return haversine_km(lat1, lon1, lat2, lon2)


def travel_costs_from(grid: Grid, origin: int) -> np.ndarray:
    """Travel cost from ``origin`` to every cell, as an (n_cells,) array."""
    lat, lon = cell_center(grid, origin)
    centers = cell_centers(grid)
    return haversine_km_vec(lat, lon, centers[:, 0], centers[:, 1])
