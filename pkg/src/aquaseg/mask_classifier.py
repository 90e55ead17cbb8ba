"""Per-pixel category prediction from corrected features and text rows.

Logits are cosine similarities between unit category embeddings and unit
feature vectors. Label maps come from bilinearly upsampled raw logits;
softmax probabilities are exposed separately for consumers that want them
(they never change the argmax, so predictions are temperature-free).
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatchError
from .gmg import interpolate_features


def mask_logits(category_rows: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Cosine logits (T_cat, H, W) between category rows and feature grid.

    Feature vectors are L2-normalized before the product; category rows are
    assumed unit (the fusion stage guarantees it).
    """
    if category_rows.ndim != 2:
        raise ShapeMismatchError(
            f"category rows must be rank 2, got {category_rows.shape}"
        )
    if features.ndim != 3:
        raise ShapeMismatchError(f"feature grid must be rank 3, got {features.shape}")
    h, w, c = features.shape
    if category_rows.shape[1] != c:
        raise ShapeMismatchError(
            f"category rows have {category_rows.shape[1]} channels, features have {c}"
        )
    flat = np.asarray(features, dtype=np.float64).reshape(h * w, c)
    norms = np.maximum(np.linalg.norm(flat, axis=1, keepdims=True), 1e-12)
    unit = flat / norms
    logits = np.asarray(category_rows, dtype=np.float64) @ unit.T
    return logits.reshape(category_rows.shape[0], h, w)


def softmax_over_categories(
    logits: np.ndarray, temperature: float = 0.01
) -> np.ndarray:
    """Per-position probabilities over the category axis of (T, H, W) logits."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    scaled = np.asarray(logits, dtype=np.float64) / temperature
    scaled = scaled - scaled.max(axis=0, keepdims=True)
    weights = np.exp(scaled)
    return weights / weights.sum(axis=0, keepdims=True)


def upsample_argmax(logits: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Bilinearly upsample each category plane, then take the per-pixel argmax.

    Uses the same corner-aligned kernel as the feature interpolation; ties
    resolve to the lowest category index, keeping predictions deterministic.
    """
    if logits.ndim != 3:
        raise ShapeMismatchError(f"logit volume must be rank 3, got {logits.shape}")
    planes = np.moveaxis(np.asarray(logits, dtype=np.float64), 0, -1)
    upsampled = interpolate_features(planes, target)
    return upsampled.argmax(axis=2).astype(np.uint16)
