"""Softmax classification head with class-weighted cross-entropy."""

from __future__ import annotations

import numpy as np

PROB_FLOOR = 1e-12


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def weighted_cross_entropy(probs: np.ndarray, labels: np.ndarray, weights=(1.0, 1.0)) -> float:
    """Mean over the batch of -w_y * log p_y; p floored at 1e-12 for the log."""
    w = np.asarray(weights, dtype=np.float64)
    if (w <= 0).any():
        raise ValueError("class weights must be positive")
    p = probs[np.arange(len(labels)), labels]
    return float(np.mean(-w[labels] * np.log(np.maximum(p, PROB_FLOOR))))


def cross_entropy_logit_grad(probs: np.ndarray, labels: np.ndarray, weights=(1.0, 1.0)) -> np.ndarray:
    """d(loss)/d(logits) for softmax + weighted cross-entropy."""
    w = np.asarray(weights, dtype=probs.dtype)
    n = len(labels)
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad *= (w[labels] / n)[:, None]
    return grad
