"""Deterministic synthetic composites: vortex positives, streak-field negatives.

Negatives are band-limited anisotropic noise ("wind streaks"). Positives
add a logarithmic-spiral brightness modulation and a dark central eye on
the same background, then restore the background mean so the classes are
not separable by mean intensity. An optional vertical nodata swath mimics
the limited SAR swath; masked pixels are stored as zeros, exactly like
zero-filled real composites.

Generation is pure given an rng: the background, swath and vortex draws
come from dedicated child streams, so a positive with its features turned
off is pixel-identical to the negative from the same rng.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .grid import RasterGrid, write_pgrid
from .sampler import Sample, write_manifest
from .sarpre import RgbComposite, rgb_compose, PolChannels

PAPER_CLASS_RATIO = 318 / 2004  # positive fraction the default set sizes track


@dataclass(frozen=True)
class VortexParams:
    eye_radius_px: float = 9.0
    spiral_arms: int = 2
    arm_contrast: float = 0.65
    swirl_rate: float = 3.0
    centre_jitter_px: float = 4.0
    background_streak_px: float = 6.0
    background_orient_jitter: float = 1.0
    nodata_swath: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.arm_contrast <= 1.0:
            raise ValueError(f"arm_contrast must be in [0, 1], got {self.arm_contrast}")
        if self.nodata_swath is not None and not 0.0 <= self.nodata_swath < 1.0:
            raise ValueError("nodata_swath must be a fraction in [0, 1)")


def default_params_for(side: int, nodata_swath: float | None = None) -> VortexParams:
    """Vortex geometry scaled to the image side (defaults target side 128)."""
    return VortexParams(
        eye_radius_px=0.07 * side,
        centre_jitter_px=0.03 * side,
        background_streak_px=max(3.0, 0.05 * side),
        nodata_swath=nodata_swath,
    )


def _streak_background(side: int, params: VortexParams, rng: np.random.Generator) -> np.ndarray:
    """Band-limited oriented noise, normalized to mean 0.45, std 0.10."""
    noise = rng.standard_normal((side, side))
    theta = rng.uniform(0.0, np.pi) * params.background_orient_jitter
    fr = np.fft.fftfreq(side)[:, None]
    fc = np.fft.rfftfreq(side)[None, :]
    f_par = fr * np.cos(theta) + fc * np.sin(theta)
    f_perp = -fr * np.sin(theta) + fc * np.cos(theta)
    sigma_broad = 1.0 / max(params.background_streak_px, 1.0)
    gain = np.exp(-0.5 * (f_par / (0.25 * sigma_broad)) ** 2 - 0.5 * (f_perp / sigma_broad) ** 2)
    gain[0, 0] = 0.0
    field = np.fft.irfft2(np.fft.rfft2(noise) * gain, s=(side, side))
    field = (field - field.mean()) / max(field.std(), 1e-9)
    return 0.45 + 0.10 * field


def _vortex_features(side: int, params: VortexParams, rng: np.random.Generator) -> np.ndarray:
    """Additive spiral arms + dark eye, centred with bounded jitter."""
    jr = rng.uniform(-params.centre_jitter_px, params.centre_jitter_px)
    jc = rng.uniform(-params.centre_jitter_px, params.centre_jitter_px)
    cr = (side - 1) / 2.0 + jr
    cc = (side - 1) / 2.0 + jc
    rr = np.arange(side)[:, None] - cr
    ccol = np.arange(side)[None, :] - cc
    r = np.hypot(rr, ccol)
    phi = np.arctan2(rr, ccol)
    envelope = np.exp(-r / (0.45 * side))
    arms = params.arm_contrast * 0.32 * np.cos(params.spiral_arms * phi - params.swirl_rate * np.log(r + 3.0)) * envelope
    arms *= r > 0.6 * params.eye_radius_px
    eye = 0.0
    if params.eye_radius_px > 0:
        eye_depth = 0.20 + 0.50 * params.arm_contrast
        eye = -eye_depth * np.exp(-0.5 * (r / params.eye_radius_px) ** 2)
    return arms + eye


def _compose(co: np.ndarray, cross_mix: np.ndarray, mask: np.ndarray | None) -> RgbComposite:
    channels = PolChannels(
        co=RasterGrid(co.astype(np.float32)),
        cross=RasterGrid(cross_mix.astype(np.float32)),
        co_nodata=mask,
        cross_nodata=mask,
    )
    return rgb_compose(channels)


def _swath_mask(side: int, params: VortexParams, rng: np.random.Generator) -> np.ndarray | None:
    # draw always so positive/negative stay stream-aligned
    pos = rng.uniform(0.0, 1.0)
    if not params.nodata_swath:
        return None
    width = int(round(params.nodata_swath * side))
    if width < 1:
        return None
    start = int(pos * (side - width))
    mask = np.zeros((side, side), dtype=bool)
    mask[:, start : start + width] = True
    return mask


def _gen(side: int, params: VortexParams, rng: np.random.Generator, with_vortex: bool) -> RgbComposite:
    bg_rng, swath_rng, feat_rng, cross_rng = rng.spawn(4)
    bg = _streak_background(side, params, bg_rng)
    mask = _swath_mask(side, params, swath_rng)
    field = bg
    if with_vortex:
        features = _vortex_features(side, params, feat_rng)
        field = bg + features
        field += bg.mean() - field.mean()  # keep classes mean-matched
    co = np.clip(field, 0.0, 1.0)
    cross_noise = _streak_background(side, params, cross_rng)
    cross = np.clip(0.7 * field + 0.3 * cross_noise, 0.0, 1.0)
    return _compose(co, cross, mask)


def gen_positive(side: int, params: VortexParams, rng: np.random.Generator) -> RgbComposite:
    if params.eye_radius_px >= side / 4:
        raise ValueError("eye radius must stay under a quarter of the image side")
    return _gen(side, params, rng, with_vortex=True)


def gen_negative(side: int, params: VortexParams, rng: np.random.Generator) -> RgbComposite:
    return _gen(side, params, rng, with_vortex=False)


def _negatives_quota(n_sets: int, negatives_per_set) -> list:
    """Per-set negative counts; default greedily tracks the 1686:318 ratio."""
    if negatives_per_set is not None:
        lo, hi = negatives_per_set
        if not 1 <= lo <= hi <= 10:
            raise ValueError("negatives_per_set bounds must satisfy 1 <= lo <= hi <= 10")
        return [(lo, hi)] * n_sets
    mean = (1.0 - PAPER_CLASS_RATIO) / PAPER_CLASS_RATIO
    counts = []
    done = 0.0
    for k in range(n_sets):
        target = (k + 1) * mean
        n = int(np.clip(round(target - done), 1, 10))
        counts.append(n)
        done += n
    return counts


def build_synth_dataset(
    n_sets: int,
    out_dir,
    seed: int = 0,
    side: int = 128,
    negatives_per_set: tuple | None = None,
    params: VortexParams | None = None,
    swath_fraction: float = 0.25,
) -> Path:
    """Write pgrids plus a manifest; returns the manifest path.

    Each set holds one positive and a quota of negatives approximating the
    reference class ratio (~15.9% positive). A random quarter of samples
    (by default) get a nodata swath.
    """
    if n_sets < 1:
        raise ValueError("need at least one set")
    if params is None:
        params = default_params_for(side)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    root = np.random.default_rng(seed)
    quotas = _negatives_quota(n_sets, negatives_per_set)
    samples = []
    for k in range(n_sets):
        set_rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, k)))
        set_id = f"set{k:04d}"
        quota = quotas[k]
        n_neg = int(set_rng.integers(quota[0], quota[1] + 1)) if isinstance(quota, tuple) else quota
        imaging = "EW" if set_rng.random() < 0.8 else "IW"
        members = [("positive", 0)] + [("negative", j + 1) for j in range(n_neg)]
        for label, idx in members:
            sample_rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, k, idx)))
            use_swath = sample_rng.random() < swath_fraction
            p = params if (params.nodata_swath or not use_swath) else replace(params, nodata_swath=0.2)
            comp = gen_positive(side, p, sample_rng) if label == "positive" else gen_negative(side, p, sample_rng)
            sid = f"{set_id}-{'p' if label == 'positive' else 'n'}{idx}"
            rel = f"{sid}.pgrid"
            write_pgrid(comp.rgb, out / rel)
            if label == "positive":
                depression = float(300.0 + 400.0 * sample_rng.random())
            else:
                depression = float(sample_rng.normal(0.0, 80.0))
            samples.append(
                Sample(
                    id=sid,
                    set_id=set_id,
                    label=label,
                    pol_mode="dual",
                    imaging_mode=imaging,
                    raster_path=rel,
                    slp_depression_pa=depression,
                )
            )
    manifest = out / "manifest.jsonl"
    write_manifest(samples, manifest)
    return manifest
