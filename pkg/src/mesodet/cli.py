"""Command-line entry point.

Subcommands cover the whole pipeline: detect, depression, compose, synth,
dataset split, train, eval, resolution-study, sweep, explain. Defaults
mirror the reference configuration (230 Pa threshold, 200 km radius cap,
batch 16, the tuned architecture), so bare invocations reproduce it.

Exit codes: 0 success, 1 flag/validation error, 2 runtime failure. All
randomness is seedable via --seed and outputs land under --out.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np


class CliError(Exception):
    """Flag or input validation failure (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mesodet", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="find mesocyclone candidate AOIs in SLP pgrids")
    d.add_argument("--slp", nargs="+", required=True, help="SLP .pgrid file(s) with geodetic metadata")
    d.add_argument("--threshold-pa", type=float, default=230.0, help="depression threshold in Pa (default 230)")
    d.add_argument("--max-radius-km", type=float, default=200.0, help="equivalent-radius cap in km (default 200)")
    d.add_argument("--out", default="-", help="output JSON-lines path (default stdout)")

    dep = sub.add_parser("depression", help="image-mean minus centre-window SLP depression")
    dep.add_argument("--raster", required=True, help="single-channel SLP .pgrid on the image grid")
    dep.add_argument("--out", default="-", help="output path (default stdout)")

    c = sub.add_parser("compose", help="scale dB channels and build an RGB composite")
    c.add_argument("--co", required=True, help="co-polarised dB .pgrid")
    c.add_argument("--cross", help="cross-polarised dB .pgrid (omit for single-pol)")
    c.add_argument("--multilook", type=int, default=1, help="block-average factor before scaling (default 1)")
    c.add_argument("--out", required=True, help="output composite .pgrid")
    c.add_argument("--png", help="optional 8-bit preview PNG path")

    s = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    s.add_argument("--sets", type=int, required=True, help="number of repeat-pass sets")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", type=int, default=128, help="image side in pixels (default 128)")

    ds = sub.add_parser("dataset", help="dataset utilities")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True)
    sp = ds_sub.add_parser("split", help="assign repeat-pass sets to train/val/test")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--test-frac", type=float, default=0.21)
    sp.add_argument("--val-frac", type=float, default=0.10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="partition JSON path")

    t = sub.add_parser("train", help="train the classifier")
    _add_train_args(t)
    t.add_argument("--epochs", type=int, default=200, help="training epochs (default 200)")
    t.add_argument("--out", required=True, help="output directory (checkpoint + history CSV)")

    e = sub.add_parser("eval", help="evaluate a checkpoint on a partition")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--partitions", required=True)
    e.add_argument("--partition", default="test", choices=["train", "val", "test"])
    e.add_argument("--crop", type=int, default=512)
    e.add_argument("--factor", type=int, default=1, help="bilinear downsample factor (1, 2 or 4)")
    e.add_argument("--out", default="-", help="metrics CSV path (default stdout)")

    r = sub.add_parser("resolution-study", help="train at native/2x/4x resolution over several seeds")
    _add_train_args(r)
    r.add_argument("--epochs", type=int, default=50)
    r.add_argument("--runs", type=int, default=10, help="independent runs per resolution (default 10)")
    r.add_argument("--factors", default="1,2,4", help="comma-separated downsample factors (default 1,2,4)")
    r.add_argument("--blocks-per-factor", default="", help="comma-separated block counts matching --factors")
    r.add_argument("--out", required=True, help="output CSV path")

    w = sub.add_parser("sweep", help="random hyperparameter search")
    _add_train_args(w)
    w.add_argument("--epochs", type=int, default=50, help="epochs per trial (default 50)")
    w.add_argument("--budget", type=int, default=10, help="number of sampled configurations")
    w.add_argument("--out", required=True, help="best-config JSON path")

    x = sub.add_parser("explain", help="attribution overlays for one sample")
    x.add_argument("--method", required=True, choices=["ig", "gradcam"])
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--manifest", required=True)
    x.add_argument("--sample", required=True, help="sample id from the manifest")
    x.add_argument("--crop", type=int, default=512)
    x.add_argument("--factor", type=int, default=1)
    x.add_argument("--m-steps", type=int, default=256, help="IG integration steps (default 256)")
    x.add_argument("--out", required=True, help="overlay PNG path")
    x.add_argument("--pgrid", help="optional raw attribution .pgrid path")
    return p


def _add_train_args(p):
    p.add_argument("--manifest", required=True)
    p.add_argument("--partitions", required=True)
    p.add_argument("--strategy", default="oversampling", choices=["class-weighting", "oversampling", "rejection"])
    p.add_argument("--blocks", type=int, default=7, help="residual blocks (default 7)")
    p.add_argument("--crop", type=int, default=512, help="training crop size (default 512)")
    p.add_argument("--factor", type=int, default=1, help="bilinear downsample factor before cropping")
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--aug-seed", type=int, help="augmentation seed (defaults to --seed)")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="augmentation workers")


def _write_text(path: str, text: str):
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


def _load_dataset(args):
    from .sampler import load_manifest, load_partitions, partition_samples
    from .trainer import SampleStore

    samples = load_manifest(args.manifest)
    partitions = load_partitions(args.partitions)
    routed = partition_samples(samples, partitions)
    return SampleStore(args.manifest), routed


def _run_config(args, epochs=None, blocks=None, crop=None, factor=None, seed=None):
    from .nn import ModelConfig
    from .trainer import TrainRunConfig

    model = ModelConfig(n_blocks=blocks if blocks is not None else args.blocks,
                        dropout_rate=args.dropout, lr=args.lr)
    return TrainRunConfig(
        model=model,
        crop_size=crop if crop is not None else args.crop,
        epochs=epochs if epochs is not None else args.epochs,
        batch_size=args.batch,
        strategy=args.strategy,
        downsample_factor=factor if factor is not None else args.factor,
        seed=seed if seed is not None else args.seed,
        aug_seed=args.aug_seed,
        workers=args.workers,
    )


def cmd_detect(args) -> int:
    from .cyclone import DetectionParams, aoi_json_line, detect_candidates, slp_field_from_grid
    from .grid import read_pgrid

    params = DetectionParams(threshold_pa=args.threshold_pa, max_radius_km=args.max_radius_km)
    lines = []
    for path in args.slp:
        field = slp_field_from_grid(read_pgrid(path))
        lines.extend(aoi_json_line(a) for a in detect_candidates(field, params))
    _write_text(args.out, "".join(line + "\n" for line in lines))
    return 0


def cmd_depression(args) -> int:
    from .cyclone import slp_depression
    from .grid import read_pgrid

    value = slp_depression(read_pgrid(args.raster))
    _write_text(args.out, f"{value!r}\n")
    return 0


def cmd_compose(args) -> int:
    from .grid import block_average, read_pgrid, write_pgrid
    from .sarpre import compose, write_png_preview

    co = read_pgrid(args.co)
    cross = read_pgrid(args.cross) if args.cross else None
    if args.multilook > 1:
        co = block_average(co, args.multilook)
        cross = block_average(cross, args.multilook) if cross is not None else None
    comp = compose(co, cross)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_pgrid(comp.rgb, args.out)
    if args.png:
        write_png_preview(comp, args.png)
    return 0


def cmd_synth(args) -> int:
    from .synth import build_synth_dataset

    if args.sets < 1:
        raise CliError("--sets must be >= 1")
    manifest = build_synth_dataset(args.sets, args.out, seed=args.seed, side=args.size)
    print(manifest)
    return 0


def cmd_dataset_split(args) -> int:
    from .sampler import group_into_sets, load_manifest, split_by_sets, write_partitions

    sets = group_into_sets(load_manifest(args.manifest))
    parts = split_by_sets(sets, test_frac=args.test_frac, val_frac=args.val_frac, seed=args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_partitions(parts, args.out)
    return 0


def cmd_train(args) -> int:
    from .nn import save_checkpoint
    from .trainer import history_to_csv, train

    store, routed = _load_dataset(args)
    result = train(_run_config(args), store, routed["train"], routed["val"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.ckpt", result.network, epoch=result.best_epoch,
                    metrics={"val_f1": result.best_val_f1})
    (out / "history.csv").write_text(history_to_csv(result.history), encoding="utf-8")
    print(f"best epoch {result.best_epoch}, val F1 {result.best_val_f1:.4f}")
    return 0


def cmd_eval(args) -> int:
    from .nn import load_checkpoint
    from .trainer import evaluate

    store, routed = _load_dataset(args)
    net, _, _ = load_checkpoint(args.checkpoint)
    cm, f1 = evaluate(net, routed[args.partition], store, args.crop, args.factor)
    text = "tn,fn,fp,tp,f1\n" + f"{cm.tn},{cm.fn},{cm.fp},{cm.tp},{f1!r}\n"
    _write_text(args.out, text)
    return 0


def cmd_resolution_study(args) -> int:
    from .trainer import resolution_study, study_to_csv

    store, routed = _load_dataset(args)
    factors = [int(f) for f in args.factors.split(",") if f]
    if args.blocks_per_factor:
        blocks = [int(b) for b in args.blocks_per_factor.split(",")]
        if len(blocks) != len(factors):
            raise CliError("--blocks-per-factor must match --factors")
    else:
        blocks = [args.blocks for _ in factors]
    variants = {}
    for f, b in zip(factors, blocks):
        if args.crop % f:
            raise CliError(f"crop {args.crop} not divisible by factor {f}")
        variants[f"{f}x"] = _run_config(args, blocks=b, crop=args.crop // f, factor=f)
    rows = resolution_study(store, variants, routed["train"], routed["val"], routed["test"], n_runs=args.runs)
    _write_text(args.out, study_to_csv(rows))
    return 0


def cmd_sweep(args) -> int:
    from .trainer import SWEEP_SPACE, TrainingDivergedError, hyperparameter_sweep, train

    store, routed = _load_dataset(args)

    def evaluate_config(model_cfg):
        cfg = replace(_run_config(args), model=model_cfg)
        try:
            result = train(cfg, store, routed["train"], routed["val"])
        except (ValueError, TrainingDivergedError) as exc:
            print(f"trial failed ({exc}); scoring 0", file=sys.stderr)
            return 0.0
        return result.best_val_f1

    best, best_f1, trials = hyperparameter_sweep(SWEEP_SPACE, args.budget, evaluate_config, seed=args.seed)
    from dataclasses import asdict

    payload = {"best": asdict(best), "best_val_f1": best_f1, "trials": len(trials)}
    _write_text(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_explain(args) -> int:
    from .grid import RasterGrid, center_crop, write_pgrid
    from .interpret import emit_overlay, gradcam, integrated_gradients
    from .nn import POSITIVE, load_checkpoint
    from .sampler import load_manifest
    from .sarpre import RgbComposite
    from .trainer import SampleStore

    samples = {s.id: s for s in load_manifest(args.manifest)}
    if args.sample not in samples:
        raise CliError(f"sample {args.sample!r} not in manifest")
    store = SampleStore(args.manifest)
    net, _, _ = load_checkpoint(args.checkpoint)
    grid = center_crop(store.image(samples[args.sample], args.factor), args.crop)
    x = grid.values
    if args.method == "ig":
        att = integrated_gradients(net, x, m_steps=args.m_steps, target_class=POSITIVE, sample_id=args.sample)
        style = "ig_green"
    else:
        att = gradcam(net, x, target_class=POSITIVE, sample_id=args.sample)
        style = "cam_heat"
    comp = RgbComposite(grid, np.zeros((grid.rows, grid.cols), dtype=bool))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    emit_overlay(comp, att, style, args.out)
    if args.pgrid:
        write_pgrid(RasterGrid(att.values.astype(np.float32)[:, :, None]), args.pgrid)
    return 0


_HANDLERS = {
    "detect": cmd_detect,
    "depression": cmd_depression,
    "compose": cmd_compose,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "resolution-study": cmd_resolution_study,
    "sweep": cmd_sweep,
    "explain": cmd_explain,
}


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "dataset":
            return cmd_dataset_split(args)
        return _HANDLERS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
