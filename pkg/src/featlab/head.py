"""Masked dense output layer shared by both classifier architectures.

The head computes ``softmax((W * mask) f + b)``. The mask is a {0,1} matrix of
the same shape as W; zeroing a column removes that feature's influence on
every class while leaving all other parameters untouched.
"""

from __future__ import annotations

import numpy as np

from .optim import softmax


def masked_weights(dense_w: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dense_w * mask


def head_logits(dense_w: np.ndarray, dense_b: np.ndarray, mask: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Logits for one feature vector (d,) or a batch (n, d)."""
    return features @ masked_weights(dense_w, mask).T + dense_b


def head_probs(dense_w: np.ndarray, dense_b: np.ndarray, mask: np.ndarray, features: np.ndarray) -> np.ndarray:
    return softmax(head_logits(dense_w, dense_b, mask, features))


def predict_label(probs: np.ndarray) -> int:
    """Argmax with ties broken toward the lowest class index."""
    return int(np.argmax(probs))


def zeroed_mask(mask: np.ndarray, feature_ids) -> np.ndarray:
    """Copy of `mask` with the given feature columns zeroed. Idempotent."""
    d = mask.shape[1]
    ids = sorted(set(int(i) for i in feature_ids))
    for i in ids:
        if not 0 <= i < d:
            raise ValueError(f"feature id {i} out of range [0, {d})")
    out = mask.copy()
    if ids:
        out[:, ids] = 0.0
    return out
