"""ERA5 NetCDF to `.pgrid` conversion.

Reads both classic NetCDF-3 files (via scipy) and NetCDF-4/HDF5 files (via
h5py), applies packed-variable scale/offset in float64, and writes one
geodetically tagged float32 `.pgrid` per selected timestamp. Values already
representable in binary32 survive unchanged.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass
from pathlib import Path

import h5py
import numpy as np
from scipy.io import netcdf_file

from mesodet.grid import RasterGrid, write_pgrid

_EPOCH_UNITS = re.compile(r"^\s*(hours|seconds|days)\s+since\s+(\d{4}-\d{2}-\d{2})[T ]?(\d{2}:\d{2}(:\d{2}(\.\d+)?)?)?")

LAT_NAMES = ("latitude", "lat")
LON_NAMES = ("longitude", "lon")
TIME_NAMES = ("time", "valid_time")


@dataclass
class Era5Job:
    path: str
    variable: str = "msl"
    out_dir: str = "."
    time_stride: int = 1
    time_start: int = 0
    time_count: int | None = None
    prefix: str = "slp"


class _NcReader:
    """Uniform access over the scipy (NetCDF-3) and h5py (NetCDF-4) backends."""

    def __init__(self, path):
        raw = open(path, "rb").read(8)
        if raw[:3] == b"CDF":
            self._nc = netcdf_file(path, "r", mmap=False)
            self._h5 = None
        elif raw[:8] == b"\x89HDF\r\n\x1a\n":
            self._h5 = h5py.File(path, "r")
            self._nc = None
        else:
            raise ValueError(f"{path}: not a NetCDF file (bad magic)")

    def close(self):
        (self._nc or self._h5).close()

    def names(self):
        return list(self._nc.variables) if self._nc else list(self._h5.keys())

    def has(self, name):
        return name in self.names()

    def values(self, name) -> np.ndarray:
        if self._nc:
            return np.array(self._nc.variables[name].data)
        return np.array(self._h5[name][...])

    def attr(self, name, key, default=None):
        if self._nc:
            value = self._nc.variables[name]._attributes.get(key, default)
        else:
            value = self._h5[name].attrs.get(key, default)
        if isinstance(value, bytes):
            value = value.decode("utf-8")
        return value


def _find(reader, candidates, kind):
    for name in candidates:
        if reader.has(name):
            return name
    raise ValueError(f"no {kind} coordinate among {candidates}; file has {reader.names()}")


def _unpack(reader, name) -> np.ndarray:
    raw = reader.values(name).astype(np.float64)
    scale = reader.attr(name, "scale_factor")
    offset = reader.attr(name, "add_offset")
    fill = reader.attr(name, "_FillValue")
    missing = reader.attr(name, "missing_value")
    mask = np.zeros(raw.shape, dtype=bool)
    for sentinel in (fill, missing):
        if sentinel is not None:
            mask |= raw == float(np.asarray(sentinel).ravel()[0])
    if scale is not None:
        raw = raw * float(np.asarray(scale).ravel()[0])
    if offset is not None:
        raw = raw + float(np.asarray(offset).ravel()[0])
    raw[mask] = np.nan
    return raw


def _timestamps(reader, name) -> list:
    units = reader.attr(name, "units", "")
    values = reader.values(name).astype(np.float64)
    m = _EPOCH_UNITS.match(units or "")
    if not m:
        return [f"t{int(v)}" for v in values]
    step, date, clock = m.group(1), m.group(2), m.group(3) or "00:00:00"
    if len(clock) == 5:
        clock += ":00"
    base = dt.datetime.fromisoformat(f"{date}T{clock.split('.')[0]}").replace(tzinfo=dt.timezone.utc)
    unit_seconds = {"hours": 3600.0, "seconds": 1.0, "days": 86400.0}[step]
    out = []
    for v in values:
        t = base + dt.timedelta(seconds=float(v) * unit_seconds)
        out.append(t.strftime("%Y-%m-%dT%H:%M:%SZ"))
    return out


def _check_uniform(axis: np.ndarray, name: str) -> float:
    if axis.size < 2:
        raise ValueError(f"{name} axis has fewer than 2 points")
    steps = np.diff(axis)
    if not np.allclose(steps, steps[0], rtol=0, atol=1e-6):
        raise ValueError(f"{name} grid is not uniform (steps span {steps.min()}..{steps.max()})")
    return float(abs(steps[0]))


def netcdf_to_pgrid(job: Era5Job) -> list:
    """Convert selected timesteps; returns the written paths."""
    reader = _NcReader(job.path)
    try:
        if not reader.has(job.variable):
            raise ValueError(f"variable {job.variable!r} not in {job.path} (has {reader.names()})")
        lat_name = _find(reader, LAT_NAMES, "latitude")
        lon_name = _find(reader, LON_NAMES, "longitude")
        time_name = _find(reader, TIME_NAMES, "time")
        lat = reader.values(lat_name).astype(np.float64)
        lon = reader.values(lon_name).astype(np.float64)
        cell = _check_uniform(lat, "latitude")
        lon_cell = _check_uniform(lon, "longitude")
        if not np.isclose(cell, lon_cell, atol=1e-6):
            raise ValueError(f"latitude step {cell} != longitude step {lon_cell}")
        data = _unpack(reader, job.variable)
        stamps = _timestamps(reader, time_name)
    finally:
        reader.close()
    if data.ndim == 2:
        data = data[None]
    if data.ndim != 3 or data.shape[1] != lat.size or data.shape[2] != lon.size:
        raise ValueError(f"variable shape {data.shape} does not match (time, {lat.size}, {lon.size})")
    if lat[0] < lat[-1]:  # store north-up so geo lat0 is the first row
        lat = lat[::-1]
        data = data[:, ::-1, :]

    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stop = data.shape[0] if job.time_count is None else min(data.shape[0], job.time_start + job.time_count * job.time_stride)
    written = []
    for ti in range(job.time_start, stop, job.time_stride):
        stamp = stamps[ti]
        grid = RasterGrid(
            data[ti][:, :, None].astype(np.float32),
            geo={"lat0": float(lat[0]), "lon0": float(lon[0]), "cell_deg": cell},
            timestamp=stamp,
        )
        path = out_dir / f"{job.prefix}_{stamp.replace(':', '').replace('-', '')}.pgrid"
        write_pgrid(grid, path)
        written.append(path)
    return written
