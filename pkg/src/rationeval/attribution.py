"""Explanation heatmaps from captured attention and attention gradients.

The core reduction multiplies each attention map elementwise with its
gradient, clips negative contributions to zero, and averages over heads.
A `grad_only` ablation applies the same clip-then-mean reduction to the
gradient alone. The classification-token row of the reduced map, minus any
non-image token entries, is reshaped to the patch grid and bilinearly
resampled to pixel resolution.

Two knobs are deliberately exposed instead of hard-coded, because upstream
conventions vary: which layers contribute (`last` or `mean` over all
captured layers) and which token indices are non-image (recorded per sample
in the manifest, defaulting to just the classification token).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels, tensor_io
from .errors import (
    CaptureValidationError,
    EmptyLayerListError,
    GridMismatchError,
    ShapeMismatchError,
)

ATTRIBUTION_METHODS = ("grad_times_attn", "grad_only")
LAYER_MODES = ("last", "mean")

ROW_SUM_TOL = 1e-4


def relevance_single_layer(attn: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Head-mean of the positively clipped gradient-attention product."""
    a = np.asarray(attn, dtype=np.float64)
    g = np.asarray(grad, dtype=np.float64)
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ShapeMismatchError(f"attention must be (heads, T, T), got {a.shape}")
    if a.shape != g.shape:
        raise ShapeMismatchError(f"attention shape {a.shape} != gradient shape {g.shape}")
    return kernels.head_mean_positive_product(a, g)


def relevance_grad_only(grad: np.ndarray) -> np.ndarray:
    """Head-mean of the positively clipped gradient alone (ablation)."""
    g = np.asarray(grad, dtype=np.float64)
    if g.ndim != 3 or g.shape[1] != g.shape[2]:
        raise ShapeMismatchError(f"gradient must be (heads, T, T), got {g.shape}")
    return kernels.head_mean_positive(g)


def aggregate_layers(maps: list[np.ndarray], mode: str = "last") -> np.ndarray:
    if mode not in LAYER_MODES:
        raise ValueError(f"layer mode must be one of {LAYER_MODES}, got {mode!r}")
    if not maps:
        raise EmptyLayerListError("no relevance maps to aggregate")
    shapes = {m.shape for m in maps}
    if len(shapes) != 1:
        raise ShapeMismatchError(f"layer maps disagree in shape: {sorted(shapes)}")
    if mode == "last":
        return np.asarray(maps[-1], dtype=np.float64)
    return np.mean(np.stack([np.asarray(m, dtype=np.float64) for m in maps]), axis=0)


def project_to_heatmap(
    relevance: np.ndarray,
    cls_index: int,
    grid: tuple[int, int],
    out_shape: tuple[int, int],
    non_image_tokens: tuple[int, ...] | None = None,
) -> np.ndarray:
    """Project the classification-token row of a T x T map to pixel space.

    The row is stripped of non-image token entries (default: only the
    classification token itself), reshaped row-major to the gh x gw patch
    grid, bilinearly resampled to out_shape, and clamped at zero.
    """
    rel = np.asarray(relevance, dtype=np.float64)
    if rel.ndim != 2 or rel.shape[0] != rel.shape[1]:
        raise ShapeMismatchError(f"relevance map must be square 2-d, got {rel.shape}")
    tokens = rel.shape[0]
    if not (0 <= cls_index < tokens):
        raise GridMismatchError(f"cls_index {cls_index} outside token range 0..{tokens - 1}")
    dropped = (cls_index,) if non_image_tokens is None else tuple(non_image_tokens)
    if len(set(dropped)) != len(dropped) or any(not (0 <= t < tokens) for t in dropped):
        raise GridMismatchError(f"non_image_tokens {dropped!r} invalid for {tokens} tokens")
    if cls_index not in dropped:
        raise GridMismatchError("non_image_tokens must include cls_index")
    gh, gw = grid
    if gh < 1 or gw < 1 or gh * gw + len(dropped) != tokens:
        raise GridMismatchError(
            f"grid {gh}x{gw} + {len(dropped)} non-image tokens != {tokens} tokens"
        )
    keep = np.array([t for t in range(tokens) if t not in set(dropped)], dtype=np.int64)
    patches = rel[cls_index, keep].reshape(gh, gw)
    heat = kernels.bilinear_resize(patches, out_shape[0], out_shape[1])
    return np.maximum(heat, 0.0)


@dataclass(frozen=True)
class AttentionCapture:
    """Per-layer attention maps and their gradients for one sample."""

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]
    target_class: int
    cls_index: int
    grid: tuple[int, int]
    non_image_tokens: tuple[int, ...]

    def validate(self) -> None:
        if not self.layers:
            raise EmptyLayerListError("capture holds no layers")
        tokens = None
        for idx, (attn, grad) in enumerate(self.layers):
            if attn.ndim != 3 or attn.shape[1] != attn.shape[2]:
                raise CaptureValidationError(
                    f"layer {idx}: attention must be (heads, T, T), got {attn.shape}"
                )
            if attn.shape != grad.shape:
                raise ShapeMismatchError(
                    f"layer {idx}: attention {attn.shape} != gradient {grad.shape}"
                )
            if tokens is None:
                tokens = attn.shape[1]
            elif attn.shape[1] != tokens:
                raise CaptureValidationError(
                    f"layer {idx}: token count {attn.shape[1]} != layer 0's {tokens}"
                )
            row_sums = np.asarray(attn, dtype=np.float64).sum(axis=2)
            worst = float(np.abs(row_sums - 1.0).max())
            if worst > ROW_SUM_TOL:
                raise CaptureValidationError(
                    f"layer {idx}: attention rows must sum to 1 within {ROW_SUM_TOL}, "
                    f"worst deviation {worst:.3e}"
                )
        assert tokens is not None
        if not (0 <= self.cls_index < tokens):
            raise CaptureValidationError(
                f"cls_index {self.cls_index} outside token range 0..{tokens - 1}"
            )
        gh, gw = self.grid
        if gh * gw + len(self.non_image_tokens) != tokens:
            raise GridMismatchError(
                f"grid {gh}x{gw} + {len(self.non_image_tokens)} non-image tokens "
                f"!= {tokens} tokens"
            )


def load_capture(evidence: tensor_io.CaptureEvidence, base_dir: str | Path) -> AttentionCapture:
    """Materialize the arrays a manifest capture entry points at."""
    base = Path(base_dir)
    layers = tuple(
        (tensor_io.read_npy(base / a), tensor_io.read_npy(base / g))
        for a, g in zip(evidence.attention_paths, evidence.gradient_paths)
    )
    return AttentionCapture(
        layers=layers,
        target_class=evidence.target_class,
        cls_index=evidence.cls_index,
        grid=evidence.grid,
        non_image_tokens=evidence.non_image_tokens,
    )


def attribute_capture(
    capture: AttentionCapture,
    out_shape: tuple[int, int],
    method: str = "grad_times_attn",
    layer_mode: str = "last",
) -> np.ndarray:
    """Full capture -> heatmap pipeline for one sample."""
    if method not in ATTRIBUTION_METHODS:
        raise ValueError(f"attribution method must be one of {ATTRIBUTION_METHODS}, got {method!r}")
    capture.validate()
    if method == "grad_times_attn":
        maps = [relevance_single_layer(a, g) for a, g in capture.layers]
    else:
        maps = [relevance_grad_only(g) for _, g in capture.layers]
    merged = aggregate_layers(maps, layer_mode)
    return project_to_heatmap(
        merged, capture.cls_index, capture.grid, out_shape, capture.non_image_tokens
    )
