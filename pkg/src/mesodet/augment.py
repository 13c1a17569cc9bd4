"""On-the-fly random augmentation for training batches.

Translation, flips, rotation and zoom are drawn per image, composed into a
single affine map (translate o rotate-about-centre o zoom-about-centre o
flip) and applied with one bilinear resampling pass; points mapping outside
the source are filled with zeros. The result is centre-cropped to the
configured size. Composing into one map avoids compounding interpolation
blur across sequential warps.

Validation and test images skip this module and take only the centre crop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import RasterGrid, center_crop


@dataclass(frozen=True)
class AugmentParams:
    max_translate_frac: float = 0.10
    max_rotate_deg: float = 40.0
    zoom_range: tuple = (0.9, 1.1)
    flip_h: bool = True
    flip_v: bool = True
    crop_size: int = 512

    def __post_init__(self):
        if not 0.0 <= self.max_translate_frac <= 1.0:
            raise ValueError(f"max_translate_frac must be in [0, 1], got {self.max_translate_frac}")
        if not 0.0 <= self.max_rotate_deg < 360.0:
            raise ValueError(f"max_rotate_deg must be in [0, 360), got {self.max_rotate_deg}")
        lo, hi = self.zoom_range
        if not (lo <= 1.0 <= hi) or lo <= 0:
            raise ValueError(f"zoom_range must straddle 1, got {self.zoom_range}")
        if self.crop_size < 1:
            raise ValueError("crop_size must be >= 1")


IDENTITY_PARAMS_KW = dict(max_translate_frac=0.0, max_rotate_deg=0.0, zoom_range=(1.0, 1.0), flip_h=False, flip_v=False)


def draw_transform(params: AugmentParams, side: int, rng: np.random.Generator) -> dict:
    """Draw one transform. The draw order is fixed so streams stay comparable
    across parameter settings: translate r, translate c, flip h, flip v,
    rotation magnitude, rotation sign, zoom."""
    t = params.max_translate_frac * side
    tr = rng.uniform(-t, t)
    tc = rng.uniform(-t, t)
    fh = bool(params.flip_h and rng.random() < 0.5)
    fv = bool(params.flip_v and rng.random() < 0.5)
    ang = rng.uniform(0.0, params.max_rotate_deg)
    ang = ang if rng.random() < 0.5 else -ang
    zoom = rng.uniform(params.zoom_range[0], params.zoom_range[1])
    return {"translate": (tr, tc), "flip_h": fh, "flip_v": fv, "rotate_deg": ang, "zoom": zoom}


def _affine_matrix(tf: dict) -> tuple:
    """(M, t): destination = M @ (src - centre) + centre + t, in (row, col)."""
    th = math.radians(tf["rotate_deg"])
    rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    z = tf["zoom"]
    flip = np.diag([-1.0 if tf["flip_v"] else 1.0, -1.0 if tf["flip_h"] else 1.0])
    m = rot @ (z * np.eye(2)) @ flip
    return m, np.asarray(tf["translate"], dtype=np.float64)


def warp_bilinear(values: np.ndarray, tf: dict) -> np.ndarray:
    """Apply the composed affine with one bilinear pass; outside -> 0."""
    h, w = values.shape[:2]
    ctr = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    m, t = _affine_matrix(tf)
    minv = np.linalg.inv(m)
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    dst = np.stack([rr.ravel(), cc.ravel()]) - ctr[:, None] - t[:, None]
    src = minv @ dst + ctr[:, None]
    sr = src[0].reshape(h, w)
    sc = src[1].reshape(h, w)

    r0 = np.floor(sr).astype(np.int64)
    c0 = np.floor(sc).astype(np.int64)
    fr = (sr - r0)[:, :, None]
    fc = (sc - c0)[:, :, None]

    out = np.zeros_like(values, dtype=np.float32)
    for dr, dcol, wgt in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc), (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        ri = r0 + dr
        ci = c0 + dcol
        valid = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < w)
        ric = np.clip(ri, 0, h - 1)
        cic = np.clip(ci, 0, w - 1)
        out += (wgt * valid[:, :, None]).astype(np.float32) * values[ric, cic, :]
    return out


def augment(image: RasterGrid, params: AugmentParams, rng: np.random.Generator) -> RasterGrid:
    """Randomly transform a composite and centre-crop it to crop_size."""
    if image.rows != image.cols:
        raise ValueError(f"augmentation expects a square image, got {image.rows}x{image.cols}")
    if image.rows < params.crop_size:
        raise ValueError(f"image side {image.rows} smaller than crop size {params.crop_size}")
    tf = draw_transform(params, image.rows, rng)
    warped = warp_bilinear(image.values, tf)
    out = RasterGrid(warped, pixel_spacing_m=image.pixel_spacing_m, timestamp=image.timestamp)
    return center_crop(out, params.crop_size)


def center_crop_only(image: RasterGrid, crop_size: int) -> RasterGrid:
    """The evaluation-time path: no randomness, just the centre window."""
    return center_crop(image, crop_size)
