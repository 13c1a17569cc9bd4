import h5py
import numpy as np
import pytest
from scipy.io import netcdf_file

from mesodet.grid import read_pgrid
from mesodet_ingest.era5 import Era5Job, netcdf_to_pgrid


def write_nc3(path, data, lat, lon, hours, packed=False, var="msl"):
    f = netcdf_file(path, "w")
    f.createDimension("time", data.shape[0])
    f.createDimension("latitude", lat.size)
    f.createDimension("longitude", lon.size)
    tv = f.createVariable("time", "f8", ("time",))
    tv[:] = hours
    tv.units = b"hours since 1900-01-01 00:00:00.0"
    la = f.createVariable("latitude", "f8", ("latitude",))
    la[:] = lat
    lo = f.createVariable("longitude", "f8", ("longitude",))
    lo[:] = lon
    if packed:
        scale, offset = 0.5, 100000.0
        raw = np.round((data - offset) / scale).astype(np.int16)
        v = f.createVariable(var, "h", ("time", "latitude", "longitude"))
        v[:] = raw
        v.scale_factor = scale
        v.add_offset = offset
        expected = raw.astype(np.float64) * scale + offset
    else:
        v = f.createVariable(var, "f8", ("time", "latitude", "longitude"))
        v[:] = data
        expected = data.astype(np.float64)
    f.close()
    return expected


def write_h5(path, data, lat, lon, hours, var="msl"):
    with h5py.File(path, "w") as f:
        f["latitude"] = lat
        f["longitude"] = lon
        t = f.create_dataset("time", data=hours)
        t.attrs["units"] = "hours since 1900-01-01 00:00:00.0"
        f[var] = data


def era5_axes(n_lat=12, n_lon=16):
    lat = 80.0 - 0.25 * np.arange(n_lat)
    lon = -20.0 + 0.25 * np.arange(n_lon)
    return lat, lon


class TestNetcdf3:
    def test_zero_field_round_trips_to_zero(self, tmp_path):
        lat, lon = era5_axes()
        data = np.zeros((1, lat.size, lon.size))
        write_nc3(tmp_path / "z.nc", data, lat, lon, [1051200.0])
        out = netcdf_to_pgrid(Era5Job(path=str(tmp_path / "z.nc"), out_dir=str(tmp_path / "out")))
        assert len(out) == 1
        grid = read_pgrid(out[0])
        assert (grid.values == 0.0).all()
        assert grid.geo == {"lat0": 80.0, "lon0": -20.0, "cell_deg": 0.25}
        assert grid.timestamp == "2019-12-03T00:00:00Z"  # 1900-01-01 + 1051200 h

    def test_values_bit_equal_to_binary32_cast(self, tmp_path):
        rng = np.random.default_rng(0)
        lat, lon = era5_axes()
        data = rng.normal(101325.0, 400.0, size=(3, lat.size, lon.size))
        expected = write_nc3(tmp_path / "v.nc", data, lat, lon, [0.0, 3.0, 6.0])
        out = netcdf_to_pgrid(Era5Job(path=str(tmp_path / "v.nc"), out_dir=str(tmp_path / "out")))
        for ti, path in enumerate(out):
            got = read_pgrid(path).values[:, :, 0]
            assert got.tobytes() == expected[ti].astype(np.float32).tobytes()

    def test_packed_variable_unpacks_before_cast(self, tmp_path):
        rng = np.random.default_rng(1)
        lat, lon = era5_axes()
        data = rng.normal(101000.0, 300.0, size=(1, lat.size, lon.size))
        expected = write_nc3(tmp_path / "p.nc", data, lat, lon, [12.0], packed=True)
        out = netcdf_to_pgrid(Era5Job(path=str(tmp_path / "p.nc"), out_dir=str(tmp_path / "out")))
        got = read_pgrid(out[0]).values[:, :, 0]
        assert got.tobytes() == expected[0].astype(np.float32).tobytes()

    def test_six_hour_selection_gives_four_files(self, tmp_path):
        lat, lon = era5_axes()
        data = np.arange(24.0)[:, None, None] * np.ones((1, lat.size, lon.size))
        write_nc3(tmp_path / "d.nc", data, lat, lon, np.arange(24.0))
        out = netcdf_to_pgrid(Era5Job(path=str(tmp_path / "d.nc"), out_dir=str(tmp_path / "out"), time_stride=6))
        assert len(out) == 4
        assert read_pgrid(out[2]).values[0, 0, 0] == 12.0

    def test_missing_variable_rejected(self, tmp_path):
        lat, lon = era5_axes()
        write_nc3(tmp_path / "m.nc", np.zeros((1, lat.size, lon.size)), lat, lon, [0.0], var="sst")
        with pytest.raises(ValueError, match="variable"):
            netcdf_to_pgrid(Era5Job(path=str(tmp_path / "m.nc"), out_dir=str(tmp_path)))

    def test_non_uniform_grid_rejected(self, tmp_path):
        lat, lon = era5_axes()
        lat = lat.copy()
        lat[3] += 0.05
        write_nc3(tmp_path / "n.nc", np.zeros((1, lat.size, lon.size)), lat, lon, [0.0])
        with pytest.raises(ValueError, match="uniform"):
            netcdf_to_pgrid(Era5Job(path=str(tmp_path / "n.nc"), out_dir=str(tmp_path)))


class TestNetcdf4:
    def test_hdf5_backend_bit_equal(self, tmp_path):
        rng = np.random.default_rng(2)
        lat, lon = era5_axes()
        data = rng.normal(101000.0, 250.0, size=(2, lat.size, lon.size))
        write_h5(tmp_path / "h.nc", data, lat, lon, [0.0, 1.0])
        out = netcdf_to_pgrid(Era5Job(path=str(tmp_path / "h.nc"), out_dir=str(tmp_path / "out")))
        assert len(out) == 2
        got = read_pgrid(out[1]).values[:, :, 0]
        assert got.tobytes() == data[1].astype(np.float32).tobytes()

    def test_ascending_latitude_flipped_north_up(self, tmp_path):
        lat = 60.0 + 0.25 * np.arange(8)  # ascending
        lon = 0.25 * np.arange(8)
        data = lat[None, :, None] * np.ones((1, 8, 8))
        write_h5(tmp_path / "a.nc", data, lat, lon, [0.0])
        out = netcdf_to_pgrid(Era5Job(path=str(tmp_path / "a.nc"), out_dir=str(tmp_path / "out")))
        grid = read_pgrid(out[0])
        assert grid.geo["lat0"] == pytest.approx(61.75)
        assert grid.values[0, 0, 0] == np.float32(61.75)

    def test_not_netcdf_rejected(self, tmp_path):
        p = tmp_path / "junk.nc"
        p.write_bytes(b"not a netcdf file")
        with pytest.raises(ValueError, match="magic"):
            netcdf_to_pgrid(Era5Job(path=str(p), out_dir=str(tmp_path)))
