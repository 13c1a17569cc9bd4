from .era5 import Era5Job, netcdf_to_pgrid
from .manifest import build_manifest, parse_filename
from .sar import SarJob, geotiff_to_pgrid

__all__ = ["Era5Job", "SarJob", "build_manifest", "geotiff_to_pgrid", "netcdf_to_pgrid", "parse_filename"]
