"""Softmax cross-entropy for the 5-class classifier."""

from __future__ import annotations

import numpy as np

from .layers import ShapeMismatch

__all__ = ["softmax_cross_entropy", "softmax_probs"]

_LOG_FLOOR = 1e-12


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood and its gradient w.r.t. the logits.

    grad = (softmax - onehot) / batch.  Probabilities are floored at 1e-12
    before the log so saturated logits cannot produce -inf.
    """
    if logits.ndim != 2:
        raise ShapeMismatch(f"logits must be (B, classes), got {logits.shape}")
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise ShapeMismatch(f"labels shape {labels.shape} vs batch {logits.shape[0]}")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError("labels out of class range")

    probs = softmax_probs(logits)
    batch = logits.shape[0]
    picked = probs[np.arange(batch), labels]
    loss = float(-np.log(np.maximum(picked, _LOG_FLOOR)).sum(dtype=np.float64) / batch)
    grad = probs.copy()
    grad[np.arange(batch), labels] -= 1.0
    grad /= batch
    return loss, grad.astype(logits.dtype)
