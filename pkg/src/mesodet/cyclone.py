"""Mesocyclone candidate detection on sea-level-pressure fields.

Candidates are local SLP depressions: cells whose pressure sits at least
``threshold_pa`` below a 9x9 sliding-average low-pass of the field, grouped
by 8-connectivity (longitude wraps cyclically) and kept while their
equivalent radius stays under ``max_radius_km``.

Threshold comparison is inclusive (>=) and grouping uses 8-connectivity;
latitude edges average over the truncated window while longitude wraps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .grid import RasterGrid

LOWPASS_WINDOW = 9
CENTER_WINDOW = 100
KM_PER_DEGREE = 111.32


@dataclass(frozen=True)
class SlpField:
    """Sea-level pressure on a uniform geodetic grid; lon is cyclic."""

    lat: np.ndarray
    lon: np.ndarray
    slp: np.ndarray
    timestamp: str = ""

    def __post_init__(self):
        lat = np.asarray(self.lat, dtype=np.float64)
        lon = np.asarray(self.lon, dtype=np.float64)
        slp = np.asarray(self.slp, dtype=np.float64)
        if slp.shape != (lat.size, lon.size):
            raise ValueError(f"slp shape {slp.shape} does not match {lat.size} lats x {lon.size} lons")
        if not np.isfinite(slp).all():
            raise ValueError("slp field contains non-finite values")
        for name, axis in (("lat", lat), ("lon", lon)):
            if axis.size >= 2:
                steps = np.diff(axis)
                if not np.allclose(steps, steps[0], rtol=0, atol=1e-9):
                    raise ValueError(f"{name} grid steps are not uniform")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)
        object.__setattr__(self, "slp", slp)

    @property
    def step_deg(self) -> float:
        return abs(float(self.lat[1] - self.lat[0])) if self.lat.size > 1 else abs(float(self.lon[1] - self.lon[0]))


@dataclass(frozen=True)
class DetectionParams:
    threshold_pa: float = 230.0
    max_radius_km: float = 200.0


@dataclass(frozen=True)
class CandidateAoi:
    """A vectorised group of depression cells."""

    cells: tuple
    area_km2: float
    equiv_radius_km: float
    centroid: tuple
    max_depression_pa: float
    timestamp: str


def lowpass_slp(field: SlpField) -> SlpField:
    """9x9 sliding average; cyclic in longitude, truncated at latitude edges."""
    half = LOWPASS_WINDOW // 2
    n, m = field.slp.shape
    if n < LOWPASS_WINDOW:
        raise ValueError(f"field has {n} latitude rows, lowpass needs at least {LOWPASS_WINDOW}")
    wrapped = np.concatenate([field.slp[:, -half:], field.slp, field.slp[:, :half]], axis=1)

    # Row-window sums with truncation via a zero-padded cumulative sum.
    csum = np.zeros((n + 1, wrapped.shape[1]))
    np.cumsum(wrapped, axis=0, out=csum[1:])
    lo = np.maximum(np.arange(n) - half, 0)
    hi = np.minimum(np.arange(n) + half, n - 1)
    row_sums = csum[hi + 1] - csum[lo]
    row_counts = (hi - lo + 1).astype(np.float64)

    # Column windows are always full thanks to the cyclic pad.
    ccsum = np.zeros((n, wrapped.shape[1] + 1))
    np.cumsum(row_sums, axis=1, out=ccsum[:, 1:])
    win_sums = ccsum[:, LOWPASS_WINDOW:] - ccsum[:, :-LOWPASS_WINDOW]
    means = win_sums / (row_counts[:, None] * LOWPASS_WINDOW)
    return SlpField(field.lat, field.lon, means, field.timestamp)


def candidate_cells(field: SlpField, lowpass: SlpField, threshold_pa: float = 230.0) -> set:
    """Cells where lowpass - slp >= threshold (inclusive)."""
    if field.slp.shape != lowpass.slp.shape:
        raise ValueError(f"field {field.slp.shape} and lowpass {lowpass.slp.shape} shapes differ")
    mask = (lowpass.slp - field.slp) >= threshold_pa
    return {(int(i), int(j)) for i, j in np.argwhere(mask)}


def group_cells(cells, n_lon: int) -> list:
    """Maximal 8-connected components; column adjacency wraps mod n_lon."""
    remaining = set(cells)
    groups = []
    while remaining:
        seed = min(remaining)
        stack = [seed]
        remaining.discard(seed)
        comp = [seed]
        while stack:
            i, j = stack.pop()
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if di == 0 and dj == 0:
                        continue
                    nb = (i + di, (j + dj) % n_lon)
                    if nb in remaining:
                        remaining.discard(nb)
                        stack.append(nb)
                        comp.append(nb)
        groups.append(sorted(comp))
    return sorted(groups)


def filter_and_vectorize(groups, field: SlpField, lowpass: SlpField, max_radius_km: float = 200.0) -> list:
    """Vectorise groups into AOIs, keeping those with equivalent radius below the cap.

    Cell area is the equatorial cell area scaled by cos(latitude); the
    centroid is the area-weighted mean of cell centres with longitude
    averaged on the circle (result in (-180, 180]).
    """
    step = field.step_deg
    cell_side_km = step * KM_PER_DEGREE
    depressions = lowpass.slp - field.slp
    aois = []
    for group in groups:
        idx = np.asarray(group)
        lats = field.lat[idx[:, 0]]
        lons = field.lon[idx[:, 1]]
        w = cell_side_km * cell_side_km * np.cos(np.radians(lats))
        area = float(w.sum())
        radius = math.sqrt(area / math.pi)
        if radius >= max_radius_km:
            continue
        lat_c = float((w * lats).sum() / w.sum())
        ang = np.radians(lons)
        lon_c = math.degrees(math.atan2((w * np.sin(ang)).sum(), (w * np.cos(ang)).sum()))
        if lon_c <= -180.0:
            lon_c += 360.0
        aois.append(
            CandidateAoi(
                cells=tuple((int(i), int(j)) for i, j in group),
                area_km2=area,
                equiv_radius_km=radius,
                centroid=(lat_c, lon_c),
                max_depression_pa=float(depressions[idx[:, 0], idx[:, 1]].max()),
                timestamp=field.timestamp,
            )
        )
    return aois


def detect_candidates(field: SlpField, params: DetectionParams = DetectionParams()) -> list:
    """Full detection chain: lowpass, threshold, group, size-filter."""
    low = lowpass_slp(field)
    cells = candidate_cells(field, low, params.threshold_pa)
    groups = group_cells(cells, field.lon.size)
    return filter_and_vectorize(groups, field, low, params.max_radius_km)


def slp_depression(slp_raster: RasterGrid) -> float:
    """Image-mean SLP minus the mean over the centre 100x100 window (Pa)."""
    if slp_raster.channels != 1:
        raise ValueError(f"depression metric needs a single channel, got {slp_raster.channels}")
    if slp_raster.rows != slp_raster.cols:
        raise ValueError(f"depression metric needs a square raster, got {slp_raster.rows}x{slp_raster.cols}")
    if slp_raster.rows < CENTER_WINDOW:
        raise ValueError(f"raster {slp_raster.rows}x{slp_raster.cols} smaller than the {CENTER_WINDOW}x{CENTER_WINDOW} centre window")
    v = slp_raster.values[:, :, 0].astype(np.float64)
    r0 = (slp_raster.rows - CENTER_WINDOW) // 2
    c0 = (slp_raster.cols - CENTER_WINDOW) // 2
    centre = v[r0 : r0 + CENTER_WINDOW, c0 : c0 + CENTER_WINDOW]
    return float(v.mean() - centre.mean())


def aoi_json_line(aoi: CandidateAoi) -> str:
    return json.dumps(
        {
            "timestamp": aoi.timestamp,
            "centroid_lat": aoi.centroid[0],
            "centroid_lon": aoi.centroid[1],
            "area_km2": aoi.area_km2,
            "equiv_radius_km": aoi.equiv_radius_km,
            "max_depression_pa": aoi.max_depression_pa,
            "n_cells": len(aoi.cells),
        }
    )


def slp_field_from_grid(grid: RasterGrid) -> SlpField:
    """Build an SlpField from a single-channel `.pgrid` with geodetic metadata."""
    if grid.channels != 1:
        raise ValueError("SLP grid must be single-channel")
    geo = grid.geo or {}
    if "lat0" not in geo or "lon0" not in geo or "cell_deg" not in geo:
        raise ValueError("SLP grid needs geodetic metadata {lat0, lon0, cell_deg}")
    lat0, lon0, cell = float(geo["lat0"]), float(geo["lon0"]), float(geo["cell_deg"])
    lat = lat0 - cell * np.arange(grid.rows)
    lon = lon0 + cell * np.arange(grid.cols)
    return SlpField(lat, lon, grid.values[:, :, 0].astype(np.float64), grid.timestamp or "")
