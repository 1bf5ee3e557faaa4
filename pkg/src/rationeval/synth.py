"""Synthetic cohorts and brute-force oracles.

Everything here exists so the measurement pipeline can be tested without
models or datasets: heatmaps constructed to hit an exact relevant-mass
score, whole cohorts with planted quadrant tallies, and a deliberately
naive scalar reimplementation of the mass ratio to check the fast kernels
against.

All randomness comes from the counter-based splitmix64 stream documented in
kernels, so equal seeds reproduce cohorts bit-identically in any language.
Per-sample streams are derived as:

    sample_key = splitmix64(cohort_seed, sample_counter)
    mask draws  from unit_doubles(splitmix64(sample_key, 1), ...)
    rho draw    from unit_doubles(splitmix64(sample_key, 2), ...)
    heat jitter from unit_doubles(splitmix64(sample_key, 3), ...)
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import kernels, tensor_io
from .analysis import GroupKey
from .errors import InfeasibleTargetError, ShapeMismatchError
from .metrics import Quadrant, QuadrantTally
from .tensor_io import Manifest, SampleEntry


def gen_heatmap_with_rma(rho: float, mask: np.ndarray, seed: int) -> np.ndarray:
    """A positive heatmap whose relevant-mass score is rho to ~1e-14.

    Mass rho is spread over in-mask pixels and 1-rho over out-mask pixels,
    with per-pixel weights jittered in [0.5, 1.5) and renormalized within
    each region so the split stays exact.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"target score must lie in [0, 1], got {rho}")
    m = np.asarray(mask, dtype=np.float64)
    inside = m == 1.0
    n_in = int(inside.sum())
    n_out = m.size - n_in
    if n_in == 0 and rho > 0.0:
        raise InfeasibleTargetError(f"target {rho} > 0 but the mask has no 1-pixels")
    if n_in == 0:
        raise InfeasibleTargetError("mask has no 1-pixels")
    if n_out == 0 and rho < 1.0:
        raise InfeasibleTargetError(f"target {rho} < 1 but the mask covers the whole image")

    weights = 0.5 + kernels.unit_doubles(seed, 0, m.size).reshape(m.shape)
    heat = np.zeros(m.shape, dtype=np.float64)
    if rho > 0.0:
        w_in = weights[inside]
        heat[inside] = w_in * (rho / float(w_in.sum()))
    if rho < 1.0:
        w_out = weights[~inside]
        heat[~inside] = w_out * ((1.0 - rho) / float(w_out.sum()))
    return heat


def brute_force_rma(heatmap, mask) -> float:
    """Naive scalar mass ratio: independent oracle, shares no code with rma."""
    h_rows = heatmap.tolist() if isinstance(heatmap, np.ndarray) else [list(r) for r in heatmap]
    m_rows = mask.tolist() if isinstance(mask, np.ndarray) else [list(r) for r in mask]
    if len(h_rows) != len(m_rows) or any(len(a) != len(b) for a, b in zip(h_rows, m_rows)):
        raise ShapeMismatchError("heatmap and mask shapes differ")
    inside = 0.0
    total = 0.0
    for h_row, m_row in zip(h_rows, m_rows):
        for v, b in zip(h_row, m_row):
            total += v
            if b != 0.0:
                inside += v
    if total == 0.0:
        return 0.0
    return inside / total


# ---------------------------------------------------------------------------
# Planted cohorts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlantedCohortSpec:
    """Per-group quadrant targets plus image geometry and the master seed."""

    groups: Mapping[GroupKey, QuadrantTally]
    image_height: int = 16
    image_width: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        if self.image_height < 2 or self.image_width < 2:
            raise ValueError("cohort images must be at least 2x2")
        if any(
            min(t.rr, t.rw, t.wr, t.ww) < 0 for t in self.groups.values()
        ):
            raise ValueError("planted quadrant counts must be >= 0")


# Score bands keep planted quadrants robust: nothing lands within 0.05 of
# the 0.5 validity boundary.
_VALID_BAND = (0.55, 1.0)
_INVALID_BAND = (0.0, 0.45)

_QUADRANT_ORDER = (Quadrant.RR, Quadrant.RW, Quadrant.WR, Quadrant.WW)


def _rect_mask(height: int, width: int, draws: np.ndarray) -> np.ndarray:
    # Rectangle strictly smaller than the image so both values occur.
    rh = 1 + int(draws[0] * (height - 1))
    rw = 1 + int(draws[1] * (width - 1))
    y0 = int(draws[2] * (height - rh + 1))
    x0 = int(draws[3] * (width - rw + 1))
    mask = np.zeros((height, width), dtype=np.float64)
    mask[y0 : y0 + rh, x0 : x0 + rw] = 1.0
    return mask


def gen_planted_cohort(spec: PlantedCohortSpec, out_dir: str | Path) -> Manifest:
    """Write heatmap/mask files plus manifest.jsonl for a planted cohort.

    Evaluating the cohort at theta=0.5 reproduces every planted tally
    exactly: RR/WR samples draw their score from [0.55, 1], RW/WW from
    [0, 0.45], and prediction correctness follows the quadrant's first
    letter.
    """
    out = Path(out_dir)
    (out / "heatmaps").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)

    entries: list[SampleEntry] = []
    counter = 0
    for group_idx, key in enumerate(sorted(spec.groups)):
        tally = spec.groups[key]
        true_class = group_idx
        tags = {
            "method": key.method,
            "corruption": key.corruption,
            "severity": str(key.severity),
        }
        corruption_slug = key.corruption if key.corruption else "clean"
        for quadrant in _QUADRANT_ORDER:
            count = getattr(tally, quadrant.value.lower())
            for i in range(count):
                sample_key = kernels.splitmix64(spec.seed, counter)
                counter += 1
                sample_id = (
                    f"{key.method}_{corruption_slug}_s{key.severity}_"
                    f"{quadrant.value.lower()}_{i:05d}"
                )
                mask = _rect_mask(
                    spec.image_height,
                    spec.image_width,
                    kernels.unit_doubles(kernels.splitmix64(sample_key, 1), 0, 4),
                )
                lo, hi = (
                    _VALID_BAND
                    if quadrant in (Quadrant.RR, Quadrant.WR)
                    else _INVALID_BAND
                )
                u = float(kernels.unit_doubles(kernels.splitmix64(sample_key, 2), 0, 1)[0])
                rho = lo + u * (hi - lo)
                heat = gen_heatmap_with_rma(rho, mask, kernels.splitmix64(sample_key, 3))

                heat_rel = f"heatmaps/{sample_id}.npy"
                mask_rel = f"masks/{sample_id}.npy"
                tensor_io.write_npy(heat, out / heat_rel)
                tensor_io.write_npy(mask, out / mask_rel)
                pred_class = (
                    true_class
                    if quadrant in (Quadrant.RR, Quadrant.RW)
                    else true_class + 1
                )
                entries.append(
                    SampleEntry(
                        sample_id=sample_id,
                        true_class=true_class,
                        pred_class=pred_class,
                        heatmap_path=heat_rel,
                        mask_path=mask_rel,
                        tags=dict(tags),
                    )
                )
    manifest = Manifest(entries=tuple(entries))
    tensor_io.write_manifest(manifest, out / "manifest.jsonl")
    return manifest
