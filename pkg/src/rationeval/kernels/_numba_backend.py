"""Numba-jitted kernel implementations.

Sequential loops, cache=True, no parallelism: results must be reproducible
run to run and (for the RNG) bit-identical to the numpy backend.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
U1 = np.uint64(1)
U11 = np.uint64(11)
U27 = np.uint64(27)
U30 = np.uint64(30)
U31 = np.uint64(31)
TWO_NEG53 = 2.0**-53


@njit(cache=True)
def _mass_sums(heatmap, mask):
    inside = 0.0
    total = 0.0
    for i in range(heatmap.shape[0]):
        for j in range(heatmap.shape[1]):
            v = heatmap[i, j]
            inside += v * mask[i, j]
            total += v
    return inside, total


def mass_sums(heatmap: np.ndarray, mask: np.ndarray) -> tuple[float, float]:
    inside, total = _mass_sums(heatmap, mask)
    return float(inside), float(total)


@njit(cache=True)
def head_mean_positive_product(attn, grad):
    heads, rows, cols = attn.shape
    out = np.zeros((rows, cols), dtype=np.float64)
    for h in range(heads):
        for i in range(rows):
            for j in range(cols):
                v = grad[h, i, j] * attn[h, i, j]
                if v > 0.0:
                    out[i, j] += v
    return out / heads


@njit(cache=True)
def head_mean_positive(grad):
    heads, rows, cols = grad.shape
    out = np.zeros((rows, cols), dtype=np.float64)
    for h in range(heads):
        for i in range(rows):
            for j in range(cols):
                v = grad[h, i, j]
                if v > 0.0:
                    out[i, j] += v
    return out / heads


@njit(cache=True)
def bilinear_resize(src, out_h, out_w):
    src_h, src_w = src.shape
    out = np.empty((out_h, out_w), dtype=np.float64)
    for i in range(out_h):
        if out_h == 1:
            y = (src_h - 1) / 2.0
        else:
            y = i * ((src_h - 1) / (out_h - 1))
        y0 = int(np.floor(y))
        y1 = min(y0 + 1, src_h - 1)
        fy = y - y0
        for j in range(out_w):
            if out_w == 1:
                x = (src_w - 1) / 2.0
            else:
                x = j * ((src_w - 1) / (out_w - 1))
            x0 = int(np.floor(x))
            x1 = min(x0 + 1, src_w - 1)
            fx = x - x0
            top = (1.0 - fx) * src[y0, x0] + fx * src[y0, x1]
            bot = (1.0 - fx) * src[y1, x0] + fx * src[y1, x1]
            out[i, j] = (1.0 - fy) * top + fy * bot
    return out


@njit(cache=True)
def rasterize_boxes(boxes, height, width):
    mask = np.zeros((height, width), dtype=np.float64)
    for b in range(boxes.shape[0]):
        x0 = boxes[b, 0]
        y0 = boxes[b, 1]
        x1 = boxes[b, 2]
        y1 = boxes[b, 3]
        for i in range(height):
            if i >= y0 and i < y1:
                for j in range(width):
                    if j >= x0 and j < x1:
                        mask[i, j] = 1.0
    return mask


@njit(cache=True)
def splitmix64_fill(seed, start, count):
    out = np.empty(count, dtype=np.uint64)
    for i in range(count):
        z = seed + (start + np.uint64(i) + U1) * GOLDEN
        z ^= z >> U30
        z *= MIX1
        z ^= z >> U27
        z *= MIX2
        z ^= z >> U31
        out[i] = z
    return out


@njit(cache=True)
def unit_doubles(seed, start, count):
    bits = splitmix64_fill(seed, start, count)
    out = np.empty(count, dtype=np.float64)
    for i in range(count):
        out[i] = np.float64(bits[i] >> U11) * TWO_NEG53
    return out


def warmup() -> None:
    """Trigger compilation of every jitted kernel on tiny inputs."""
    a = np.ones((1, 2, 2), dtype=np.float64)
    m = np.ones((2, 2), dtype=np.float64)
    mass_sums(m, m)
    head_mean_positive_product(a, a)
    head_mean_positive(a)
    bilinear_resize(m, 3, 3)
    rasterize_boxes(np.zeros((1, 4), dtype=np.float64), 2, 2)
    unit_doubles(np.uint64(1), np.uint64(0), 1)
