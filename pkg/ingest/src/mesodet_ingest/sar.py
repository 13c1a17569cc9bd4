"""Geocoded SAR GeoTIFF (dB) to `.pgrid` conversion.

Targets calibrated, geocoded backscatter rasters: one band per polarisation
channel, optional GDAL nodata tag mapped to NaN, pixel spacing read from the
GeoTIFF model pixel scale when present.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tifffile

from mesodet.grid import RasterGrid, write_pgrid

GDAL_NODATA_TAG = 42113
MODEL_PIXEL_SCALE_TAG = 33550


@dataclass
class SarJob:
    path: str
    band_map: dict = field(default_factory=lambda: {"co": 1})  # name -> 1-based band
    out_dir: str = "."
    nodata: float | None = None       # overrides the GDAL tag
    pixel_spacing_m: float | None = None  # overrides the pixel scale tag
    prefix: str | None = None


def _read_tags(path):
    nodata = None
    spacing = None
    with tifffile.TiffFile(path) as tif:
        page = tif.pages[0]
        tag = page.tags.get(GDAL_NODATA_TAG)
        if tag is not None:
            try:
                nodata = float(str(tag.value).strip())
            except ValueError:
                nodata = None
        tag = page.tags.get(MODEL_PIXEL_SCALE_TAG)
        if tag is not None and len(tag.value) >= 2:
            sx, sy = float(tag.value[0]), float(tag.value[1])
            if sx > 0 and np.isclose(sx, sy, rtol=1e-6):
                spacing = sx
    return nodata, spacing


def geotiff_to_pgrid(job: SarJob) -> dict:
    """Convert mapped bands; returns {band_name: written_path}."""
    data = tifffile.imread(job.path)
    if data.ndim == 2:
        data = data[:, :, None]
    elif data.ndim == 3 and data.shape[0] < min(data.shape[1], data.shape[2]):
        data = np.moveaxis(data, 0, -1)  # band-major layouts
    n_bands = data.shape[2]
    tag_nodata, tag_spacing = _read_tags(job.path)
    nodata = job.nodata if job.nodata is not None else tag_nodata
    spacing = job.pixel_spacing_m if job.pixel_spacing_m is not None else (tag_spacing or 1.0)
    prefix = job.prefix or Path(job.path).stem
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, band in job.band_map.items():
        if not 1 <= band <= n_bands:
            raise ValueError(f"band {band} for {name!r} out of range; file has {n_bands} band(s)")
        values = data[:, :, band - 1].astype(np.float64)
        if nodata is not None:
            values = np.where(values == nodata, np.nan, values)
        grid = RasterGrid(values[:, :, None].astype(np.float32), pixel_spacing_m=spacing)
        path = out_dir / f"{prefix}_{name}.pgrid"
        write_pgrid(grid, path)
        written[name] = path
    return written
