"""Pure-numpy kernel implementations.

Reference semantics for the numba backend: every function here must accept
the same dtypes and produce results within 1e-12 of its numba twin (the
seeded-generator functions must match bit-for-bit).
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
TWO_NEG53 = 2.0**-53


def mass_sums(heatmap: np.ndarray, mask: np.ndarray) -> tuple[float, float]:
    """Return (sum of heatmap inside mask, total heatmap sum) in float64."""
    inside = float((heatmap * mask).sum())
    total = float(heatmap.sum())
    return inside, total


def head_mean_positive_product(attn: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return np.maximum(grad * attn, 0.0).mean(axis=0)


def head_mean_positive(grad: np.ndarray) -> np.ndarray:
    return np.maximum(grad, 0.0).mean(axis=0)


def bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    ys = _axis_coords(src.shape[0], out_h)
    xs = _axis_coords(src.shape[1], out_w)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, src.shape[0] - 1)
    x1 = np.minimum(x0 + 1, src.shape[1] - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    v00 = src[y0[:, None], x0[None, :]]
    v01 = src[y0[:, None], x1[None, :]]
    v10 = src[y1[:, None], x0[None, :]]
    v11 = src[y1[:, None], x1[None, :]]
    return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11)


def _axis_coords(src_len: int, out_len: int) -> np.ndarray:
    # Corner-anchored: first/last output samples hit the first/last source
    # cells exactly. A single-sample output reads the source midpoint.
    if out_len == 1:
        return np.full(1, (src_len - 1) / 2.0)
    scale = (src_len - 1) / (out_len - 1)
    return np.arange(out_len, dtype=np.float64) * scale


def rasterize_boxes(boxes: np.ndarray, height: int, width: int) -> np.ndarray:
    # Half-open membership: pixel (x, y) covered iff x0 <= x < x1, y0 <= y < y1.
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    mask = np.zeros((height, width), dtype=bool)
    for x0, y0, x1, y1 in boxes:
        cols = (xs >= x0) & (xs < x1)
        rows = (ys >= y0) & (ys < y1)
        mask |= rows[:, None] & cols[None, :]
    return mask.astype(np.float64)


def splitmix64_fill(seed: np.uint64, start: np.uint64, count: int) -> np.ndarray:
    idx = start + np.arange(1, count + 1, dtype=np.uint64)
    z = seed + idx * GOLDEN
    z ^= z >> np.uint64(30)
    z *= MIX1
    z ^= z >> np.uint64(27)
    z *= MIX2
    z ^= z >> np.uint64(31)
    return z


def unit_doubles(seed: np.uint64, start: np.uint64, count: int) -> np.ndarray:
    bits = splitmix64_fill(seed, start, count) >> np.uint64(11)
    return bits.astype(np.float64) * TWO_NEG53
