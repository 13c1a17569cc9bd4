"""Dataset partitioning by repeat-pass set and imbalance-aware batching.

Samples are grouped into repeat-pass sets (one positive, up to ten
negatives sharing a grid). Partitioning assigns whole sets so land
features never straddle train/test. Three balancing strategies drive batch
construction: loss re-weighting by class frequency, oversampling of the
positive class into half-and-half batches, and rejection sampling down to
a balanced subset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

LABELS = ("negative", "positive")
POL_MODES = ("single", "dual")
IMAGING_MODES = ("EW", "IW")
MAX_NEGATIVES_PER_SET = 10
STRATEGIES = ("class-weighting", "oversampling", "rejection")


@dataclass(frozen=True)
class Sample:
    id: str
    set_id: str
    label: str
    pol_mode: str
    imaging_mode: str
    raster_path: str
    slp_depression_pa: float | None = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.pol_mode not in POL_MODES:
            raise ValueError(f"pol_mode must be one of {POL_MODES}, got {self.pol_mode!r}")
        if self.imaging_mode not in IMAGING_MODES:
            raise ValueError(f"imaging_mode must be one of {IMAGING_MODES}, got {self.imaging_mode!r}")

    @property
    def is_positive(self) -> bool:
        return self.label == "positive"


@dataclass(frozen=True)
class RepeatPassSet:
    set_id: str
    positive: Sample
    negatives: tuple

    def __post_init__(self):
        if len(self.negatives) > MAX_NEGATIVES_PER_SET:
            raise ValueError(f"set {self.set_id}: {len(self.negatives)} negatives exceeds {MAX_NEGATIVES_PER_SET}")

    @property
    def samples(self) -> list:
        return [self.positive, *self.negatives]

    def __len__(self) -> int:
        return 1 + len(self.negatives)


def write_manifest(samples, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(asdict(s), sort_keys=True) + "\n")


def load_manifest(path) -> list:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                samples.append(Sample(**rec))
            except (json.JSONDecodeError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad manifest record: {exc}") from exc
    ids = [s.id for s in samples]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate sample ids")
    return samples


def group_into_sets(samples) -> list:
    by_set = {}
    for s in samples:
        by_set.setdefault(s.set_id, []).append(s)
    sets = []
    for set_id in sorted(by_set):
        members = by_set[set_id]
        positives = [s for s in members if s.is_positive]
        if len(positives) != 1:
            raise ValueError(f"set {set_id}: expected exactly one positive, found {len(positives)}")
        negatives = tuple(sorted((s for s in members if not s.is_positive), key=lambda s: s.id))
        sets.append(RepeatPassSet(set_id, positives[0], negatives))
    return sets


def split_by_sets(sets, test_frac: float = 0.21, val_frac: float = 0.10, seed: int = 0) -> dict:
    """Assign whole sets to test/val/train.

    Sets are shuffled and moved greedily into test until the test sample
    fraction first reaches test_frac; val is carved from the remainder the
    same way at val_frac. Deterministic for a given seed.
    """
    sets = sorted(sets, key=lambda s: s.set_id)
    if not sets:
        raise ValueError("no sets to split")
    total = sum(len(s) for s in sets)
    rng = np.random.default_rng(seed)
    order = [sets[i] for i in rng.permutation(len(sets))]

    def carve(pool, frac, pool_total):
        taken, count = [], 0
        while pool and frac > 0 and count < frac * pool_total:
            s = pool.pop(0)
            taken.append(s)
            count += len(s)
        return taken

    test = carve(order, test_frac, total)
    remainder_total = sum(len(s) for s in order)
    if not order:
        raise ValueError(f"test_frac {test_frac} consumed every set; nothing left to train on")
    val = carve(order, val_frac, remainder_total)
    if not order:
        raise ValueError(f"val_frac {val_frac} consumed the remaining sets; nothing left to train on")
    return {
        "train": sorted(s.set_id for s in order),
        "val": sorted(s.set_id for s in val),
        "test": sorted(s.set_id for s in test),
    }


def write_partitions(partitions: dict, path) -> None:
    mapping = {sid: name for name, ids in partitions.items() for sid in ids}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mapping, fh, indent=0, sort_keys=True)


def load_partitions(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        mapping = json.load(fh)
    out = {"train": [], "val": [], "test": []}
    for sid, name in mapping.items():
        if name not in out:
            raise ValueError(f"unknown partition {name!r} for set {sid}")
        out[name].append(sid)
    return {k: sorted(v) for k, v in out.items()}


def partition_samples(samples, partitions: dict) -> dict:
    by_name = {name: set(ids) for name, ids in partitions.items()}
    out = {name: [] for name in by_name}
    for s in samples:
        for name, ids in by_name.items():
            if s.set_id in ids:
                out[name].append(s)
                break
    return out


def class_weights(n0: int, n1: int) -> tuple:
    """Loss weights (w0, w1) balancing class frequencies.

    w_c = (n0 + n1) / (2 * n_c), so n0*w0 + n1*w1 = n0 + n1.
    """
    if n0 < 1 or n1 < 1:
        raise ValueError(f"both classes need at least one sample, got n0={n0}, n1={n1}")
    half_total = (n0 + n1) / 2.0
    return half_total / n0, half_total / n1


class OversamplingPlanner:
    """Half-and-half batches with a positive pool that persists across epochs.

    Negatives reshuffle every epoch and appear exactly once per epoch
    (trailing negatives short of a half batch are dropped). Positives are
    drawn from a reshuffled-when-exhausted cycle that continues across
    epochs, so cumulative appearance counts never spread by more than one.
    No id repeats within a batch.
    """

    def __init__(self, train_samples, batch_size: int = 16, seed: int = 0):
        if batch_size % 2:
            raise ValueError(f"batch size must be even, got {batch_size}")
        self.half = batch_size // 2
        self.batch_size = batch_size
        self.negatives = [s for s in train_samples if not s.is_positive]
        self.positives = [s for s in train_samples if s.is_positive]
        if len(self.negatives) < self.half or len(self.positives) < self.half:
            raise ValueError(
                f"need at least {self.half} samples per class, got "
                f"{len(self.negatives)} neg / {len(self.positives)} pos"
            )
        self._rng = np.random.default_rng(seed)
        self._pool = []

    def epoch(self) -> list:
        rng = self._rng
        negatives = [self.negatives[i] for i in rng.permutation(len(self.negatives))]
        batches = []
        for b in range(len(negatives) // self.half):
            batch = list(negatives[b * self.half : (b + 1) * self.half])
            in_batch = {s.id for s in batch}
            chosen, held = [], []
            while len(chosen) < self.half:
                if not self._pool:
                    self._pool = [self.positives[i] for i in rng.permutation(len(self.positives))]
                s = self._pool.pop(0)
                if s.id in in_batch:
                    held.append(s)
                else:
                    chosen.append(s)
                    in_batch.add(s.id)
            self._pool = held + self._pool  # still owed in the current cycle
            batch.extend(chosen)
            batches.append([batch[i] for i in rng.permutation(self.batch_size)])
        return batches


def oversample_epoch(train_samples, batch_size: int = 16, seed: int = 0) -> list:
    """One epoch of balanced oversampled batches (fresh pool)."""
    return OversamplingPlanner(train_samples, batch_size, seed).epoch()


def rejection_sample_epoch(train_samples, batch_size: int = 16, seed: int = 0) -> list:
    """Balanced epoch by dropping majority samples; each survivor seen once."""
    negatives = [s for s in train_samples if not s.is_positive]
    positives = [s for s in train_samples if s.is_positive]
    if not negatives or not positives:
        raise ValueError("both classes must be non-empty")
    rng = np.random.default_rng(seed)
    minority, majority = (positives, negatives) if len(positives) <= len(negatives) else (negatives, positives)
    keep_idx = rng.choice(len(majority), size=len(minority), replace=False)
    kept = list(minority) + [majority[i] for i in sorted(keep_idx)]
    kept = [kept[i] for i in rng.permutation(len(kept))]
    return [kept[i : i + batch_size] for i in range(0, len(kept), batch_size)]


def plain_epoch(train_samples, batch_size: int = 16, seed: int = 0) -> list:
    """Shuffled pass over the full training set (for class-weighting)."""
    rng = np.random.default_rng(seed)
    order = [train_samples[i] for i in rng.permutation(len(train_samples))]
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def make_batch_planner(strategy: str, train_samples, batch_size: int, seed: int) -> tuple:
    """(epoch_fn, loss_weights) for a strategy.

    ``epoch_fn(epoch_index)`` yields that epoch's batches. Oversampling
    keeps pool state across calls (call with increasing indices); the other
    strategies derive an independent stream per epoch.
    """
    if strategy == "class-weighting":
        n1 = sum(1 for s in train_samples if s.is_positive)
        n0 = len(train_samples) - n1
        weights = class_weights(n0, n1)
        return (lambda e: plain_epoch(train_samples, batch_size, np.random.SeedSequence(entropy=(seed, e)))), weights
    if strategy == "oversampling":
        planner = OversamplingPlanner(train_samples, batch_size, seed)
        return (lambda e: planner.epoch()), (1.0, 1.0)
    if strategy == "rejection":
        return (
            lambda e: rejection_sample_epoch(train_samples, batch_size, np.random.SeedSequence(entropy=(seed, e)))
        ), (1.0, 1.0)
    raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
