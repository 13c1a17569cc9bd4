"""Core raster container and the portable `.pgrid` binary format.

A RasterGrid is an N-channel float32 image with NaN encoding nodata, an
isotropic pixel spacing in metres, and optional georeferencing. Every other
module trades in this type.

The `.pgrid` on-disk layout (version 1):

    bytes 0..3    magic "PGRD"
    byte  4       format version (1)
    byte  5       reserved (0)
    bytes 6..9    rows, u32 little-endian
    bytes 10..13  cols, u32 little-endian
    bytes 14..15  channels, u16 little-endian
    then rows*cols*channels IEEE-754 binary32 little-endian values in
    row-major, channel-minor order (NaN = nodata)
    optionally a u32 little-endian length followed by that many bytes of
    UTF-8 JSON metadata ({"pixel_spacing_m": ..., "geo": ..., "timestamp": ...})

The metadata block is omitted when the grid carries only defaults
(spacing 1.0, no geo, no timestamp), so a bare grid's file size is exactly
16 + rows*cols*channels*4 bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

_MAGIC = b"PGRD"
_VERSION = 1
_HEADER = struct.Struct("<4sBBIIH")


class PgridError(ValueError):
    """Base for `.pgrid` format violations."""


class BadMagicError(PgridError):
    """File does not start with the PGRD magic."""


class VersionMismatchError(PgridError):
    """File declares an unsupported format version."""


class TruncatedPayloadError(PgridError):
    """File ends before the declared payload or metadata block is complete."""


@dataclass(frozen=True)
class RasterGrid:
    """Immutable (rows, cols, channels) float32 raster; NaN marks nodata."""

    values: np.ndarray
    pixel_spacing_m: float = 1.0
    geo: dict | None = None
    timestamp: str | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float32, copy=True)
        if values.ndim == 2:
            values = values[:, :, np.newaxis]
        if values.ndim != 3 or min(values.shape) < 1:
            raise ValueError(f"grid values must be (rows, cols, channels) with all dims >= 1, got shape {values.shape}")
        if not self.pixel_spacing_m > 0:
            raise ValueError(f"pixel_spacing_m must be > 0, got {self.pixel_spacing_m}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def write_pgrid(grid: RasterGrid, path) -> None:
    """Serialize a grid to `path` in the version-1 layout above."""
    header = _HEADER.pack(_MAGIC, _VERSION, 0, grid.rows, grid.cols, grid.channels)
    payload = np.ascontiguousarray(grid.values, dtype="<f4").tobytes()
    meta = {}
    if grid.pixel_spacing_m != 1.0:
        meta["pixel_spacing_m"] = grid.pixel_spacing_m
    if grid.geo is not None:
        meta["geo"] = grid.geo
    if grid.timestamp is not None:
        meta["timestamp"] = grid.timestamp
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        if meta:
            if "pixel_spacing_m" not in meta:
                meta["pixel_spacing_m"] = grid.pixel_spacing_m
            blob = json.dumps(meta, sort_keys=True).encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)


def read_pgrid(path) -> RasterGrid:
    """Read a `.pgrid` file; raises a distinct error per malformation."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: file shorter than the 16-byte header")
    magic, version, _reserved, rows, cols, channels = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise VersionMismatchError(f"{path}: unsupported pgrid version {version}")
    n = rows * cols * channels
    end = _HEADER.size + 4 * n
    if len(raw) < end:
        raise TruncatedPayloadError(f"{path}: payload ends at byte {len(raw)}, expected {end}")
    values = np.frombuffer(raw, dtype="<f4", count=n, offset=_HEADER.size)
    values = values.reshape(rows, cols, channels)

    spacing, geo, timestamp = 1.0, None, None
    if len(raw) > end:
        if len(raw) < end + 4:
            raise TruncatedPayloadError(f"{path}: dangling bytes after payload are not a metadata block")
        (mlen,) = struct.unpack_from("<I", raw, end)
        if len(raw) != end + 4 + mlen:
            raise TruncatedPayloadError(f"{path}: metadata block declares {mlen} bytes, {len(raw) - end - 4} present")
        meta = json.loads(raw[end + 4:].decode("utf-8"))
        spacing = float(meta.get("pixel_spacing_m", 1.0))
        geo = meta.get("geo")
        timestamp = meta.get("timestamp")
    return RasterGrid(values, pixel_spacing_m=spacing, geo=geo, timestamp=timestamp)


def block_average(grid: RasterGrid, k: int) -> RasterGrid:
    """Nodata-aware k x k block mean (multi-looking).

    Each output pixel is the mean of the non-NaN members of its block and is
    NaN only when the whole block is NaN. Trailing rows/cols that do not fill
    a block are dropped rather than padded, so edge statistics stay unbiased.
    Pixel spacing grows by k.
    """
    if k < 1:
        raise ValueError(f"block size must be >= 1, got {k}")
    if k == 1:
        return grid
    rows_out = grid.rows // k
    cols_out = grid.cols // k
    if rows_out < 1 or cols_out < 1:
        raise ValueError(f"grid {grid.rows}x{grid.cols} too small for {k}x{k} blocks")
    v = grid.values[: rows_out * k, : cols_out * k, :]
    blocks = v.reshape(rows_out, k, cols_out, k, grid.channels)
    counts = np.count_nonzero(~np.isnan(blocks), axis=(1, 3))
    with np.errstate(invalid="ignore"):
        sums = np.nansum(blocks, axis=(1, 3))
    out = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return RasterGrid(out, pixel_spacing_m=grid.pixel_spacing_m * k, geo=grid.geo, timestamp=grid.timestamp)


def bilinear_downsample(grid: RasterGrid, factor: int) -> RasterGrid:
    """Downsample by an integer factor with bilinear interpolation.

    Values are sampled at output-pixel centres; edge samples clamp to the
    border. NaN is replaced by 0 before interpolation (composites already
    store nodata as 0).
    """
    if factor not in (2, 4):
        raise ValueError(f"downsample factor must be 2 or 4, got {factor}")
    if grid.rows % factor or grid.cols % factor:
        raise ValueError(f"factor {factor} does not divide grid {grid.rows}x{grid.cols}")
    v = np.nan_to_num(grid.values, nan=0.0)
    out_rows = grid.rows // factor
    out_cols = grid.cols // factor
    rr = np.clip((np.arange(out_rows) + 0.5) * factor - 0.5, 0.0, grid.rows - 1.0)
    cc = np.clip((np.arange(out_cols) + 0.5) * factor - 0.5, 0.0, grid.cols - 1.0)
    r0 = np.floor(rr).astype(np.intp)
    c0 = np.floor(cc).astype(np.intp)
    r1 = np.minimum(r0 + 1, grid.rows - 1)
    c1 = np.minimum(c0 + 1, grid.cols - 1)
    fr = (rr - r0).astype(np.float32)[:, None, None]
    fc = (cc - c0).astype(np.float32)[None, :, None]
    out = (
        v[np.ix_(r0, c0)] * (1 - fr) * (1 - fc)
        + v[np.ix_(r0, c1)] * (1 - fr) * fc
        + v[np.ix_(r1, c0)] * fr * (1 - fc)
        + v[np.ix_(r1, c1)] * fr * fc
    )
    return RasterGrid(out, pixel_spacing_m=grid.pixel_spacing_m * factor, geo=grid.geo, timestamp=grid.timestamp)


def center_crop(grid: RasterGrid, size: int) -> RasterGrid:
    """Crop the size x size window centred on the grid centre.

    Odd remainders floor-align: the window starts at (extent - size) // 2 on
    each axis. Geo metadata is dropped (the origin is no longer tracked).
    """
    if size < 1:
        raise ValueError(f"crop size must be >= 1, got {size}")
    if size > grid.rows or size > grid.cols:
        raise ValueError(f"crop size {size} exceeds grid extent {grid.rows}x{grid.cols}")
    r0 = (grid.rows - size) // 2
    c0 = (grid.cols - size) // 2
    out = grid.values[r0 : r0 + size, c0 : c0 + size, :]
    return RasterGrid(out, pixel_spacing_m=grid.pixel_spacing_m, geo=None, timestamp=grid.timestamp)
