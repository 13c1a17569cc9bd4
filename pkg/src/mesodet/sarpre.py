"""Percentile rescaling of dB backscatter and RGB composition.

Each polarisation channel is stretched so its 2nd/98th percentiles map to
0/1, with the percentile anchors clipped to fixed dB ranges to keep the
scaling comparable across scenes: the 2nd percentile to [-25, -15] dB and
the 98th to [-10, 0] dB. Nodata pixels are excluded from the percentiles
and come out as 0, but their mask is retained for downstream rendering.

Composites follow the dual-pol recipe R = G = (co + cross) / 2, B = co and
grey replication for single-pol scenes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .grid import RasterGrid

P_LOW, P_HIGH = 2.0, 98.0
P_LOW_CLIP = (-25.0, -15.0)
P_HIGH_CLIP = (-10.0, 0.0)


@dataclass(frozen=True)
class PolChannels:
    """Co- (and optionally cross-) polarised channels plus their nodata masks."""

    co: RasterGrid
    cross: RasterGrid | None = None
    pol_labels: tuple = ("HH", "HV")
    co_nodata: np.ndarray | None = None
    cross_nodata: np.ndarray | None = None

    def __post_init__(self):
        if self.co.channels != 1:
            raise ValueError("co channel must be single-channel")
        if self.cross is not None:
            if self.cross.channels != 1:
                raise ValueError("cross channel must be single-channel")
            if (self.cross.rows, self.cross.cols) != (self.co.rows, self.co.cols):
                raise ValueError(
                    f"co {self.co.rows}x{self.co.cols} and cross {self.cross.rows}x{self.cross.cols} shapes differ"
                )

    @property
    def pol_mode(self) -> str:
        return "dual" if self.cross is not None else "single"


@dataclass(frozen=True)
class RgbComposite:
    """3-channel composite in [0, 1]; masked pixels carry 0."""

    rgb: RasterGrid
    nodata_mask: np.ndarray

    def __post_init__(self):
        if self.rgb.channels != 3:
            raise ValueError("composite must have 3 channels")
        if self.nodata_mask.shape != (self.rgb.rows, self.rgb.cols):
            raise ValueError("nodata mask shape mismatch")
        v = self.rgb.values
        if np.nanmin(v) < 0.0 or np.nanmax(v) > 1.0:
            raise ValueError("composite values must lie in [0, 1]")


def percentile_scale(channel: RasterGrid) -> RasterGrid:
    """Rescale a dB channel to [0, 1] between its clipped 2nd/98th percentiles.

    Percentiles use linear interpolation between order statistics. NaN pixels
    are excluded from the percentile computation and map to 0.
    """
    if channel.channels != 1:
        raise ValueError("percentile_scale expects a single-channel raster")
    v = channel.values[:, :, 0]
    finite = v[~np.isnan(v)]
    if finite.size == 0:
        raise ValueError("cannot rescale an all-nodata raster")
    p2 = float(np.clip(np.percentile(finite, P_LOW), *P_LOW_CLIP))
    p98 = float(np.clip(np.percentile(finite, P_HIGH), *P_HIGH_CLIP))
    scaled = np.clip((v - p2) / (p98 - p2), 0.0, 1.0)
    scaled = np.where(np.isnan(v), 0.0, scaled)
    return RasterGrid(scaled, pixel_spacing_m=channel.pixel_spacing_m, geo=channel.geo, timestamp=channel.timestamp)


def rgb_compose(channels: PolChannels) -> RgbComposite:
    """Compose already-rescaled channels into an RGB image.

    Dual pol: R = G = (co + cross) / 2, B = co. Single pol: grey co.
    The nodata mask is the union of the source masks; masked pixels are 0.
    """
    co = channels.co.values[:, :, 0]
    mask = channels.co_nodata if channels.co_nodata is not None else np.zeros(co.shape, dtype=bool)
    if channels.cross is not None:
        cross = channels.cross.values[:, :, 0]
        if channels.cross_nodata is not None:
            mask = mask | channels.cross_nodata
        rg = (co + cross) / 2.0
        rgb = np.stack([rg, rg, co], axis=-1)
    else:
        rgb = np.stack([co, co, co], axis=-1)
    rgb = np.where(mask[:, :, None], 0.0, rgb)
    grid = RasterGrid(
        rgb,
        pixel_spacing_m=channels.co.pixel_spacing_m,
        geo=channels.co.geo,
        timestamp=channels.co.timestamp,
    )
    return RgbComposite(grid, np.asarray(mask, dtype=bool))


def compose(co_db: RasterGrid, cross_db: RasterGrid | None = None, pol_labels: tuple = ("HH", "HV")) -> RgbComposite:
    """Scale raw dB channels and compose them in one step."""
    co_mask = np.isnan(co_db.values[:, :, 0])
    cross_mask = np.isnan(cross_db.values[:, :, 0]) if cross_db is not None else None
    scaled = PolChannels(
        co=percentile_scale(co_db),
        cross=percentile_scale(cross_db) if cross_db is not None else None,
        pol_labels=pol_labels,
        co_nodata=co_mask,
        cross_nodata=cross_mask,
    )
    return rgb_compose(scaled)


def write_png_preview(composite: RgbComposite, path) -> None:
    """8-bit PNG preview: value * 255, rounded half to even."""
    arr = np.rint(composite.rgb.values * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")
