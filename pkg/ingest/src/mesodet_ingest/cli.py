"""`mesodet-ingest`: convert ERA5 NetCDF / SAR GeoTIFF inputs to .pgrid and
build dataset manifests. Exit codes: 0 ok, 1 validation error, 2 runtime."""

from __future__ import annotations

import argparse
import sys


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def build_parser():
    p = _Parser(prog="mesodet-ingest", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("era5", help="NetCDF SLP field to per-timestep pgrids")
    e.add_argument("--input", required=True, help="NetCDF-3 or NetCDF-4 file")
    e.add_argument("--variable", default="msl", help="variable name (default msl)")
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--time-start", type=int, default=0)
    e.add_argument("--time-stride", type=int, default=1)
    e.add_argument("--time-count", type=int)
    e.add_argument("--prefix", default="slp")

    s = sub.add_parser("sar", help="geocoded dB GeoTIFF to per-band pgrids")
    s.add_argument("--input", required=True)
    s.add_argument("--co-band", type=int, default=1, help="1-based co-pol band (default 1)")
    s.add_argument("--cross-band", type=int, help="1-based cross-pol band (omit for single-pol)")
    s.add_argument("--nodata", type=float, help="override the GDAL nodata tag")
    s.add_argument("--pixel-spacing-m", type=float, help="override the pixel scale tag")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--prefix")

    m = sub.add_parser("manifest", help="build a manifest from composite pgrids")
    m.add_argument("--dir", required=True, help="directory of <grid>_r<orbit>_... .pgrid files")
    m.add_argument("--out", help="manifest path (default <dir>/manifest.jsonl)")
    return p


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "era5":
            from .era5 import Era5Job, netcdf_to_pgrid

            written = netcdf_to_pgrid(
                Era5Job(
                    path=args.input,
                    variable=args.variable,
                    out_dir=args.out,
                    time_start=args.time_start,
                    time_stride=args.time_stride,
                    time_count=args.time_count,
                    prefix=args.prefix,
                )
            )
            print("\n".join(str(p) for p in written))
        elif args.command == "sar":
            from .sar import SarJob, geotiff_to_pgrid

            band_map = {"co": args.co_band}
            if args.cross_band is not None:
                band_map["cross"] = args.cross_band
            written = geotiff_to_pgrid(
                SarJob(
                    path=args.input,
                    band_map=band_map,
                    out_dir=args.out,
                    nodata=args.nodata,
                    pixel_spacing_m=args.pixel_spacing_m,
                    prefix=args.prefix,
                )
            )
            print("\n".join(f"{k}: {v}" for k, v in sorted(written.items())))
        else:
            from .manifest import build_manifest

            print(build_manifest(args.dir, args.out))
        return 0
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
