"""Gradient-based attributions: Integrated Gradients and Grad-CAM.

Both methods differentiate the pre-softmax logit of the target class:
softmax probabilities saturate, which flattens gradients exactly where the
model is confident, and the completeness check is only meaningful on an
unsquashed score. This choice shifts absolute attribution values relative
to probability-space gradients.

Integrated Gradients uses the midpoint Riemann rule between the baseline
and the input. The baseline is a black (all-zero) composite, which the
trained model classifies as negative; attributions are therefore only
defined for the positive class, and asking for the negative class is an
error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .nn.model import Network, POSITIVE
from .sarpre import RgbComposite

DEFAULT_IG_STEPS = 256


@dataclass(frozen=True)
class AttributionMap:
    """Per-pixel relevance for one sample and one target class."""

    values: np.ndarray
    target_class: int
    normalization: str
    sample_id: str | None = None

    def __post_init__(self):
        if not np.isfinite(self.values).all():
            raise ValueError("attribution map contains non-finite values")


def _logit_input_gradients(net: Network, x_batch: np.ndarray, target_class: int) -> np.ndarray:
    probs = net.forward(x_batch, train=False)
    dlogits = np.zeros_like(probs)
    dlogits[:, target_class] = 1.0
    dx, _ = net.backward_from_logits(dlogits)
    return dx


def target_logit(net: Network, x: np.ndarray, target_class: int) -> float:
    net.forward(x[None], train=False)
    return float(net.logits[0, target_class])


def integrated_gradients(
    net: Network,
    x: np.ndarray,
    baseline: np.ndarray | None = None,
    m_steps: int = DEFAULT_IG_STEPS,
    target_class: int = POSITIVE,
    sample_id: str | None = None,
    chunk: int = 32,
) -> AttributionMap:
    """Midpoint-rule path integral of input gradients from baseline to x.

    Returns per-pixel attributions (summed over colour channels). The raw
    per-channel attribution sums to F(x) - F(baseline) as m grows.
    """
    if target_class != POSITIVE:
        raise ValueError(
            "integrated gradients are only defined for the positive class: "
            "the black baseline is itself classified negative"
        )
    if m_steps < 1:
        raise ValueError("m_steps must be >= 1")
    x = np.asarray(x, dtype=np.float32)
    if baseline is None:
        baseline = np.zeros_like(x)
    if baseline.shape != x.shape:
        raise ValueError(f"baseline shape {baseline.shape} does not match input {x.shape}")
    diff = x - baseline
    total = np.zeros_like(x, dtype=np.float64)
    alphas = (np.arange(m_steps) + 0.5) / m_steps
    for start in range(0, m_steps, chunk):
        batch_alphas = alphas[start : start + chunk]
        xb = baseline[None] + batch_alphas[:, None, None, None] * diff[None]
        grads = _logit_input_gradients(net, xb.astype(np.float32), target_class)
        if not np.isfinite(grads).all():
            raise FloatingPointError("non-finite input gradients during integration")
        total += grads.sum(axis=0, dtype=np.float64)
    attribution = diff.astype(np.float64) * (total / m_steps)
    return AttributionMap(attribution.sum(axis=2), target_class, "raw", sample_id)


def ig_completeness_gap(net: Network, x, attribution: AttributionMap, baseline=None) -> float:
    """|sum(IG) - (F(x) - F(x'))| relative to |F(x) - F(x')|."""
    x = np.asarray(x, dtype=np.float32)
    if baseline is None:
        baseline = np.zeros_like(x)
    span = target_logit(net, x, attribution.target_class) - target_logit(net, baseline, attribution.target_class)
    if span == 0.0:
        return float(abs(attribution.values.sum()))
    return float(abs(attribution.values.sum() - span) / abs(span))


def bilinear_resize(values: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    """Centre-aligned bilinear resize of a 2-D map (used for heatmap upsampling)."""
    rows, cols = values.shape
    rr = np.clip((np.arange(out_rows) + 0.5) * rows / out_rows - 0.5, 0, rows - 1)
    cc = np.clip((np.arange(out_cols) + 0.5) * cols / out_cols - 0.5, 0, cols - 1)
    r0 = np.floor(rr).astype(int)
    c0 = np.floor(cc).astype(int)
    r1 = np.minimum(r0 + 1, rows - 1)
    c1 = np.minimum(c0 + 1, cols - 1)
    fr = (rr - r0)[:, None]
    fc = (cc - c0)[None, :]
    return (
        values[np.ix_(r0, c0)] * (1 - fr) * (1 - fc)
        + values[np.ix_(r0, c1)] * (1 - fr) * fc
        + values[np.ix_(r1, c0)] * fr * (1 - fc)
        + values[np.ix_(r1, c1)] * fr * fc
    )


def gradcam(
    net: Network,
    x: np.ndarray,
    target_class: int = POSITIVE,
    block_index: int | None = None,
    sample_id: str | None = None,
) -> AttributionMap:
    """Gradient-weighted class activation map at a residual block output.

    Channel weights are the spatial means of d(logit)/d(activation); the
    rectified weighted sum is upsampled to the input size and min-max
    normalized to [0, 1] (an all-zero map stays zero). Defaults to the last
    block.
    """
    x = np.asarray(x, dtype=np.float32)
    n_blocks = len(net.blocks)
    if block_index is None:
        block_index = n_blocks - 1
    if not 0 <= block_index < n_blocks:
        raise ValueError(f"block_index {block_index} out of range for {n_blocks} blocks")
    probs = net.forward(x[None], train=False)
    activations = net.block_outputs[block_index][0]
    dlogits = np.zeros_like(probs)
    dlogits[:, target_class] = 1.0
    _, grad = net.backward_from_logits(dlogits, capture_block=block_index)
    weights = grad[0].mean(axis=(0, 1))
    heat = np.maximum((activations * weights).sum(axis=2), 0.0)
    heat = bilinear_resize(heat, x.shape[0], x.shape[1])
    peak = heat.max()
    if peak > 0:
        heat = heat / peak
    return AttributionMap(heat, target_class, "minmax[0,1]", sample_id)


def _heat_colormap(a: np.ndarray) -> np.ndarray:
    """Black -> red -> yellow -> white ramp for values in [0, 1]."""
    r = np.clip(3.0 * a, 0.0, 1.0)
    g = np.clip(3.0 * a - 1.0, 0.0, 1.0)
    b = np.clip(3.0 * a - 2.0, 0.0, 1.0)
    return np.stack([r, g, b], axis=-1)


def emit_overlay(rgb: RgbComposite, attribution: AttributionMap, style: str, path) -> None:
    """Blend an attribution layer over the composite and write a PNG.

    The blend weight is 0.5 * a per pixel, so zero attribution reproduces
    the base preview exactly and a saturated map gives an even blend.
    Styles: 'ig_green' (green layer) or 'cam_heat' (heat colormap).
    """
    base = rgb.rgb.values
    a = attribution.values
    if a.shape != base.shape[:2]:
        a = bilinear_resize(a, base.shape[0], base.shape[1])
    pos = np.maximum(a, 0.0)
    peak = pos.max()
    if attribution.normalization != "minmax[0,1]" and peak > 0:
        pos = pos / peak
    if style == "ig_green":
        colour = np.zeros_like(base)
        colour[:, :, 1] = 1.0
    elif style == "cam_heat":
        colour = _heat_colormap(pos)
    else:
        raise ValueError(f"unknown overlay style {style!r}")
    w = 0.5 * pos[:, :, None]
    blended = base * (1.0 - w) + colour * w
    arr = np.rint(np.clip(blended, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")
