"""Geometric-guided correction of dense vision-language patch features.

A self-similarity map of geometric encoder features is sharpened
(mean-centering, scaling, thresholding) into a row-stochastic attention
prior, and that prior re-mixes the spatially interpolated patch features
so each position aggregates geometrically similar neighbours.

All functions are pure; arrays flatten positions row-major (row index
major), matching the extractor's export order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError

NEG_INF = -np.inf


@dataclass(frozen=True)
class GmgConfig:
    """Sharpening coefficients and the geometric encoder stage to consume."""

    beta: float = 1.2
    gamma: float = 3.0
    geo_stage: int = 3

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.geo_stage not in (0, 1, 2, 3):
            raise ValueError(f"geo_stage must be in 0..3, got {self.geo_stage}")


@dataclass(frozen=True)
class AttentionMap:
    """Row-stochastic mixing weights plus the rows that fell back to identity.

    A fallback row arises when thresholding removed every candidate; it is
    exactly the standard-basis row, leaving that position uncorrected.
    """

    rows: np.ndarray
    fallback_rows: frozenset[int]

    @property
    def n(self) -> int:
        return self.rows.shape[0]


def self_similarity(geo: np.ndarray) -> np.ndarray:
    """Gram matrix of the flattened geometric feature grid.

    ``geo`` is (H_g, W_g, C_g); the result is (n, n) with n = H_g * W_g and
    entry [i, j] the dot product of the channel vectors at flattened
    positions i and j. No channel normalization is applied.
    """
    if geo.ndim != 3:
        raise ShapeMismatchError(f"geometric grid must be rank 3, got {geo.shape}")
    h, w, c = geo.shape
    flat = geo.reshape(h * w, c).astype(np.float64)
    return flat @ flat.T


def sharpen_and_mask(sim: np.ndarray, cfg: GmgConfig) -> np.ndarray:
    """Center, scale, and threshold a similarity matrix into masked logits.

    Entries become ``gamma * (S - beta * mean(S))``; negative results are
    masked to -inf, zero and positive results survive. The mean runs over
    all n^2 entries, diagonal included.
    """
    sim = np.asarray(sim, dtype=np.float64)
    centered = cfg.gamma * (sim - cfg.beta * sim.mean())
    return np.where(centered < 0, NEG_INF, centered)


def attention_from_logits(logits: np.ndarray) -> AttentionMap:
    """Row-wise softmax over finite entries, with identity fallback.

    Rows whose entries are all -inf cannot be normalized; they become the
    standard-basis row for their own position and are reported in
    ``fallback_rows``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    n = logits.shape[0]
    rows = np.empty_like(logits)
    fallback = []
    for i in range(n):
        row = logits[i]
        finite = np.isfinite(row)
        if not finite.any():
            rows[i] = 0.0
            rows[i, i] = 1.0
            fallback.append(i)
            continue
        shifted = row - row[finite].max()
        weights = np.exp(shifted, where=finite, out=np.zeros_like(row))
        rows[i] = weights / weights.sum()
    return AttentionMap(rows=rows, fallback_rows=frozenset(fallback))


def interpolate_features(grid: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Channel-wise bilinear resampling with corner-aligned sampling.

    Output position i along an axis of output length m samples source
    coordinate ``i * (n - 1) / (m - 1)`` (0 when m == 1), so the four grid
    corners map onto each other and equal shapes reproduce the input
    exactly.
    """
    if grid.ndim != 3:
        raise ShapeMismatchError(f"feature grid must be rank 3, got {grid.shape}")
    h, w, _ = grid.shape
    th, tw = target
    if th < 1 or tw < 1:
        raise ShapeMismatchError(f"target size must be positive, got {target}")
    if (h, w) == (th, tw):
        return np.array(grid, dtype=np.float64)

    grid = np.asarray(grid, dtype=np.float64)
    ys = _source_coords(h, th)
    xs = _source_coords(w, tw)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]

    top = grid[y0][:, x0] * (1 - fx) + grid[y0][:, x1] * fx
    bottom = grid[y1][:, x0] * (1 - fx) + grid[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def _source_coords(n_in: int, n_out: int) -> np.ndarray:
    if n_out == 1:
        return np.zeros(1)
    return np.arange(n_out) * ((n_in - 1) / (n_out - 1))


def correct_features(attention: AttentionMap, grid: np.ndarray) -> np.ndarray:
    """Mix feature vectors with attention weights: each output position is a
    convex combination of input positions."""
    if grid.ndim != 3:
        raise ShapeMismatchError(f"feature grid must be rank 3, got {grid.shape}")
    h, w, c = grid.shape
    if attention.n != h * w:
        raise ShapeMismatchError(
            f"attention is {attention.n}x{attention.n}, grid has {h * w} positions"
        )
    flat = grid.reshape(h * w, c).astype(np.float64)
    return (attention.rows @ flat).reshape(h, w, c)


def gmg_forward(
    clip_features: np.ndarray, geo_features: np.ndarray, cfg: GmgConfig
) -> np.ndarray:
    """Full correction pipeline: similarity, sharpen, softmax, mix.

    ``clip_features`` (H, W, C) is first resampled to the geometric grid's
    spatial size, then re-mixed by the attention prior derived from
    ``geo_features`` (H_g, W_g, C_g). Returns an (H_g, W_g, C) grid.
    """
    attention = attention_from_logits(
        sharpen_and_mask(self_similarity(geo_features), cfg)
    )
    interpolated = interpolate_features(clip_features, geo_features.shape[:2])
    return correct_features(attention, interpolated)
