"""North-polar equal-area grid geometry and bilinear regridding.

The projection is the spherical Lambert azimuthal equal-area, north-polar
aspect, on a sphere of radius 6,371,228 m. This approximates the ellipsoidal
EASE2 definition; the deviation is small against a 25 km cell. The default
448 x 304 grid is pole-centered with 25 km cells.
"""

from __future__ import annotations

import numpy as np

from ..errors import DataError

EARTH_RADIUS_M = 6_371_228.0
GRID_SHAPE = (448, 304)
CELL_M = 25_000.0


def laea_project(lat_deg, lon_deg):
    """Forward projection: (lat, lon) degrees -> (x, y) meters; pole -> (0, 0)."""
    lat = np.asarray(lat_deg, dtype=np.float64)
    lon = np.asarray(lon_deg, dtype=np.float64)
    if (lat <= 0).any() or (lat > 90).any():
        raise DataError("laea_project: latitude must lie in (0, 90] for the north-polar aspect")
    rho = 2.0 * EARTH_RADIUS_M * np.sin(np.deg2rad(90.0 - lat) / 2.0)
    lam = np.deg2rad(lon)
    x = rho * np.sin(lam)
    y = -rho * np.cos(lam)
    if np.isscalar(lat_deg) and np.isscalar(lon_deg):
        return float(x), float(y)
    return x, y


def laea_inverse(x, y):
    """Inverse projection: meters -> (lat, lon) degrees, lon in (-180, 180]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rho = np.hypot(x, y)
    arg = np.clip(rho / (2.0 * EARTH_RADIUS_M), 0.0, 1.0)
    lat = 90.0 - 2.0 * np.rad2deg(np.arcsin(arg))
    lon = np.rad2deg(np.arctan2(x, -y))
    return lat, lon


def grid_xy(shape: tuple[int, int] = GRID_SHAPE, cell_m: float = CELL_M):
    """Cell-center coordinates of the pole-centered grid: x[w], y[h] in meters.

    Row 0 is the most northerly y (largest), matching [t, y, x] field order.
    """
    h, w = shape
    x = (np.arange(w) - (w - 1) / 2.0) * cell_m
    y = ((h - 1) / 2.0 - np.arange(h)) * cell_m
    return x, y


def grid_latlon(shape: tuple[int, int] = GRID_SHAPE, cell_m: float = CELL_M):
    """Latitude and longitude of every cell center, each [H, W]."""
    x, y = grid_xy(shape, cell_m)
    xx, yy = np.meshgrid(x, y)
    return laea_inverse(xx, yy)


def _nearest_fill(field: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Copy values into invalid cells from the nearest valid cell (BFS rings)."""
    if valid.all():
        return field
    if not valid.any():
        raise DataError("regrid: no target cell has source coverage")
    out = field.copy()
    known = valid.copy()
    while not known.all():
        fill_from = np.zeros_like(out)
        counts = np.zeros(out.shape, dtype=np.int32)
        for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            shifted = np.roll(known, (dy, dx), axis=(0, 1))
            vals = np.roll(out, (dy, dx), axis=(0, 1))
            if dy == -1:
                shifted[-1, :] = False
            elif dy == 1:
                shifted[0, :] = False
            if dx == -1:
                shifted[:, -1] = False
            elif dx == 1:
                shifted[:, 0] = False
            take = shifted & ~known
            fill_from[take] += vals[take]
            counts[take] += 1
        ring = counts > 0
        out[ring] = fill_from[ring] / counts[ring]
        known |= ring
    return out


def regrid_bilinear(
    src: np.ndarray,
    src_lats: np.ndarray,
    src_lons: np.ndarray,
    shape: tuple[int, int] = GRID_SHAPE,
    cell_m: float = CELL_M,
) -> np.ndarray:
    """Bilinear interpolation of a (lat, lon) field onto the equal-area grid.

    src is [nlat, nlon] on regularly listed (not necessarily uniform)
    ascending-or-descending latitudes and ascending longitudes. Longitude is
    treated as periodic. Target cells whose centers fall outside the source
    latitude coverage are filled from their nearest covered neighbor.
    """
    src = np.asarray(src, dtype=np.float64)
    src_lats = np.asarray(src_lats, dtype=np.float64)
    src_lons = np.asarray(src_lons, dtype=np.float64)
    if src.shape != (src_lats.size, src_lons.size):
        raise DataError(
            f"regrid: field {src.shape} does not match axes ({src_lats.size}, {src_lons.size})"
        )
    flip = src_lats[0] > src_lats[-1]
    lats = src_lats[::-1] if flip else src_lats
    grid = src[::-1] if flip else src

    # periodic longitude: append the first column at lon + 360
    lons = np.concatenate([src_lons, [src_lons[0] + 360.0]])
    grid = np.concatenate([grid, grid[:, :1]], axis=1)

    lat_t, lon_t = grid_latlon(shape, cell_m)
    lon_t = np.mod(lon_t - lons[0], 360.0) + lons[0]

    # fractional indices along each axis
    li = np.clip(np.searchsorted(lats, lat_t, side="right") - 1, 0, lats.size - 2)
    lj = np.clip(np.searchsorted(lons, lon_t, side="right") - 1, 0, lons.size - 2)
    fy = (lat_t - lats[li]) / (lats[li + 1] - lats[li])
    fx = (lon_t - lons[lj]) / (lons[lj + 1] - lons[lj])

    v00 = grid[li, lj]
    v01 = grid[li, lj + 1]
    v10 = grid[li + 1, lj]
    v11 = grid[li + 1, lj + 1]
    out = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11)

    covered = (lat_t >= lats[0]) & (lat_t <= lats[-1])
    return _nearest_fill(out, covered)
