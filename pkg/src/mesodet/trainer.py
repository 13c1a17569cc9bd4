"""Training orchestration: epochs, balancing strategy, augmentation workers,
checkpoint retention, and evaluation.

Every random draw derives from the run seed through tagged seed sequences
(init / batch plan / dropout / per-batch augmentation), so two runs with the
same configuration produce identical metric histories regardless of how many
augmentation workers feed the loop. The best-validation-F1 parameters are
retained and restored into the returned network.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .augment import AugmentParams, augment
from .grid import RasterGrid, bilinear_downsample, center_crop, read_pgrid
from .nn import Adam, ModelConfig, Network
from .nn.losses import cross_entropy_logit_grad, weighted_cross_entropy
from .sampler import make_batch_planner

POSITIVE_LABEL = "positive"


class TrainingDivergedError(RuntimeError):
    """Raised when the loss goes non-finite."""


@dataclass(frozen=True)
class ConfusionMatrix:
    tn: int
    fn: int
    fp: int
    tp: int

    def __post_init__(self):
        if min(self.tn, self.fn, self.fp, self.tp) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tn + self.fn + self.fp + self.tp


def f1_score(cm: ConfusionMatrix) -> float:
    """2*tp / (2*tp + fp + fn); defined as 0 when no positives exist anywhere."""
    denom = 2 * cm.tp + cm.fp + cm.fn
    return 2.0 * cm.tp / denom if denom else 0.0


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    val: ConfusionMatrix
    val_f1: float


@dataclass(frozen=True)
class TrainRunConfig:
    model: ModelConfig
    crop_size: int
    epochs: int
    batch_size: int = 16
    strategy: str = "oversampling"
    downsample_factor: int = 1
    seed: int = 0
    aug_seed: int | None = None
    augment: AugmentParams | None = None
    workers: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")

    def augment_params(self) -> AugmentParams:
        return self.augment if self.augment is not None else AugmentParams(crop_size=self.crop_size)


@dataclass
class TrainResult:
    network: Network
    history: list
    best_epoch: int
    best_val_f1: float


class SampleStore:
    """Loads sample rasters relative to the manifest, caching per factor."""

    def __init__(self, manifest_path):
        self.base = Path(manifest_path).parent
        self._cache = {}

    def image(self, sample, factor: int = 1) -> RasterGrid:
        key = (sample.id, factor)
        grid = self._cache.get(key)
        if grid is None:
            grid = read_pgrid(self.base / sample.raster_path)
            if factor > 1:
                grid = bilinear_downsample(grid, factor)
            self._cache[key] = grid
        return grid


def _seq(*entropy) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=entropy)


def _augmented_batches(batches, store, cfg: TrainRunConfig, epoch: int):
    """Yield (x, labels) batches in order, prefetching with a bounded window.

    Each batch owns an rng stream keyed by (seed, epoch, batch index), so the
    produced tensors are identical no matter how many workers run.
    """
    aug = cfg.augment_params()
    aug_seed = cfg.seed if cfg.aug_seed is None else cfg.aug_seed

    def prepare(bi):
        rng = np.random.default_rng(_seq(aug_seed, 3, epoch, bi))
        xs, ys = [], []
        for s in batches[bi]:
            img = store.image(s, cfg.downsample_factor)
            xs.append(augment(img, aug, rng).values)
            ys.append(1 if s.label == POSITIVE_LABEL else 0)
        return np.stack(xs), np.asarray(ys, dtype=np.int64)

    if cfg.workers <= 1:
        for bi in range(len(batches)):
            yield prepare(bi)
        return
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        pending = deque()
        limit = 2 * cfg.workers  # bounded queue: submission blocks on consumption
        for bi in range(len(batches)):
            pending.append(pool.submit(prepare, bi))
            if len(pending) >= limit:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()


def evaluate(net: Network, samples, store: SampleStore, crop_size: int, factor: int = 1, batch_size: int = 16):
    """Centre-crop evaluation (no augmentation). Returns (ConfusionMatrix, F1)."""
    if not samples:
        raise ValueError("cannot evaluate an empty sample list")
    tn = fn = fp = tp = 0
    for i in range(0, len(samples), batch_size):
        chunk = samples[i : i + batch_size]
        x = np.stack([center_crop(store.image(s, factor), crop_size).values for s in chunk])
        probs = net.forward(x, train=False)
        preds = probs.argmax(axis=1)
        for s, p in zip(chunk, preds):
            truth = 1 if s.label == POSITIVE_LABEL else 0
            if truth == 1 and p == 1:
                tp += 1
            elif truth == 1:
                fn += 1
            elif p == 1:
                fp += 1
            else:
                tn += 1
    cm = ConfusionMatrix(tn, fn, fp, tp)
    return cm, f1_score(cm)


def train(cfg: TrainRunConfig, store: SampleStore, train_samples, val_samples) -> TrainResult:
    """Run the full loop; the returned network carries the best-val-F1 weights."""
    if not train_samples or not val_samples:
        raise ValueError("train and val partitions must both be non-empty")
    overlap = {s.id for s in train_samples} & {s.id for s in val_samples}
    if overlap:
        raise ValueError(f"samples appear in both train and val: {sorted(overlap)[:3]}...")
    net = Network(cfg.model, seed=_seq(cfg.seed, 0))
    opt = Adam(lr=cfg.model.lr)
    strategy_seed = int(_seq(cfg.seed, 1).generate_state(1)[0])
    next_epoch, weights = make_batch_planner(cfg.strategy, train_samples, cfg.batch_size, strategy_seed)
    history = []
    best_f1, best_epoch, best_state = -1.0, 0, None
    for epoch in range(1, cfg.epochs + 1):
        batches = next_epoch(epoch)
        drop_rng = np.random.default_rng(_seq(cfg.seed, 2, epoch))
        losses = []
        for bi, (x, y) in enumerate(_augmented_batches(batches, store, cfg, epoch)):
            probs = net.forward(x, train=True, rng=drop_rng)
            loss = weighted_cross_entropy(probs, y, weights)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss {loss} at epoch {epoch}, batch {bi}")
            net.backward_from_logits(cross_entropy_logit_grad(probs, y, weights))
            opt.step(net.parameters(), net.gradients())
            losses.append(loss)
        cm, val_f1 = evaluate(net, val_samples, store, cfg.crop_size, cfg.downsample_factor, cfg.batch_size)
        history.append(EpochMetrics(epoch, float(np.mean(losses)), cm, val_f1))
        if val_f1 > best_f1:
            best_f1, best_epoch = val_f1, epoch
            best_state = [(name, arr.copy()) for name, arr in net.state_arrays()]
    for (_, arr), (_, saved) in zip(net.state_arrays(), best_state):
        arr[...] = saved
    return TrainResult(net, history, best_epoch, best_f1)


def history_to_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "val_tn", "val_fn", "val_fp", "val_tp", "val_f1"])
    for m in history:
        w.writerow([m.epoch, repr(m.train_loss), m.val.tn, m.val.fn, m.val.fp, m.val.tp, repr(m.val_f1)])
    return buf.getvalue()


@dataclass(frozen=True)
class StudyRow:
    label: str
    mean: dict
    std: dict
    n_runs: int


def resolution_study(store, variants, train_samples, val_samples, test_samples, n_runs: int = 10) -> list:
    """Train each resolution variant over n_runs seeds; report mean and std.

    ``variants`` maps a label (e.g. pixel size) to a TrainRunConfig whose
    downsample factor and crop size match that resolution. Per-run seeds
    derive from the variant seed so rows are reproducible independently.
    """
    rows = []
    for label, cfg in variants.items():
        counts = {k: [] for k in ("tn", "fn", "fp", "tp", "f1")}
        for run in range(n_runs):
            run_seed = int(np.random.SeedSequence(entropy=(cfg.seed, 4, run)).generate_state(1)[0])
            result = train(replace(cfg, seed=run_seed), store, train_samples, val_samples)
            cm, f1 = evaluate(result.network, test_samples, store, cfg.crop_size, cfg.downsample_factor, cfg.batch_size)
            for k, v in (("tn", cm.tn), ("fn", cm.fn), ("fp", cm.fp), ("tp", cm.tp), ("f1", f1)):
                counts[k].append(v)
        rows.append(
            StudyRow(
                label=label,
                mean={k: float(np.mean(v)) for k, v in counts.items()},
                std={k: float(np.std(v)) for k, v in counts.items()},
                n_runs=n_runs,
            )
        )
    return rows


def study_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["pixel_size"]
    for k in ("tn", "fn", "fp", "tp", "f1"):
        header += [f"{k}_mean", f"{k}_std"]
    w.writerow(header)
    for row in rows:
        line = [row.label]
        for k in ("tn", "fn", "fp", "tp", "f1"):
            line += [repr(row.mean[k]), repr(row.std[k])]
        w.writerow(line)
    return buf.getvalue()


# Hyperparameter search space: lists are categorical, int pairs are inclusive
# integer ranges, float pairs are continuous ranges.
SWEEP_SPACE = {
    "activation": ["relu"],
    "entry_filters": [8, 16],
    "kernel": [3, 5],
    "sep_filters_0": [8, 16, 24, 32],
    "n_blocks": (2, 8),
    "global_pool": ["avg"],
    "n_dense": (1, 3),
    "dense_units": [8, 16, 24, 32],
    "dropout_rate": (0.1, 0.6),
    "batchnorm": [True, False],
    "lr": [1e-2, 1e-3, 1e-4],
}


def sample_model_config(space: dict, rng: np.random.Generator) -> ModelConfig:
    kwargs = {}
    for key, spec in space.items():
        if isinstance(spec, list):
            kwargs[key] = spec[int(rng.integers(0, len(spec)))]
        elif isinstance(spec, tuple) and all(isinstance(v, int) for v in spec):
            kwargs[key] = int(rng.integers(spec[0], spec[1] + 1))
        elif isinstance(spec, tuple):
            kwargs[key] = float(rng.uniform(spec[0], spec[1]))
        else:
            raise ValueError(f"bad space entry for {key!r}: {spec!r}")
    return ModelConfig(**kwargs)


def hyperparameter_sweep(space: dict, budget: int, evaluate_config, seed: int = 0):
    """Random search: sample ``budget`` configs, keep the best val F1.

    ``evaluate_config(config) -> float`` runs the (shortened) training and
    returns the validation F1. Returns (best_config, best_f1, trials).
    """
    if not space:
        raise ValueError("hyperparameter space is empty")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    trials = []
    best_cfg, best_f1 = None, -1.0
    for _ in range(budget):
        cfg = sample_model_config(space, rng)
        score = evaluate_config(cfg)
        trials.append((cfg, score))
        if score > best_f1:
            best_cfg, best_f1 = cfg, score
    return best_cfg, best_f1, trials
