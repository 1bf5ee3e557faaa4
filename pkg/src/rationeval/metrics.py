"""Rationality measurements: relevant-mass scoring and quadrant statistics.

A heatmap's relevant-mass score is the fraction of its total mass lying
inside the ground-truth mask. Evidence counts as valid when the score
reaches the threshold (inclusive; default 0.5). Crossing validity with
prediction correctness yields four quadrants:

    RR  right prediction, right rationale (valid evidence)
    RW  right prediction, wrong rationale
    WR  wrong prediction, right rationale
    WW  wrong prediction, wrong rationale

Two ratios summarize a tally: prediction trustworthiness rr/(rr+rw), the
share of correct predictions backed by valid evidence, and inference
reliability rr/(rr+wr), the share of valid-evidence samples predicted
correctly. Either is undefined when its denominator is zero; undefined is
always surfaced as None (or an exception on request), never as 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from . import kernels
from .errors import (
    BoxOutOfBoundsError,
    DegenerateBoxError,
    EmptyCohortError,
    ShapeMismatchError,
    UndefinedMetricError,
)

DEFAULT_THETA = 0.5
DEFAULT_IOU_TAU = 0.5

DEGENERATE_HEATMAP = "degenerate_heatmap"


def mask_from_bboxes(
    boxes: Iterable[tuple[float, float, float, float]], width: int, height: int
) -> np.ndarray:
    """Union of half-open pixel boxes as a 0/1 float mask of (height, width)."""
    box_list = [tuple(float(c) for c in b) for b in boxes]
    for b in box_list:
        x0, y0, x1, y1 = b
        if x0 >= x1 or y0 >= y1:
            raise DegenerateBoxError(f"box {b} has no area")
        if x0 < 0 or y0 < 0 or x1 > width or y1 > height:
            raise BoxOutOfBoundsError(f"box {b} exceeds {width}x{height} image bounds")
    arr = np.array(box_list, dtype=np.float64).reshape(len(box_list), 4)
    return kernels.rasterize_boxes(arr, height, width)


def rma(heatmap: np.ndarray, mask: np.ndarray) -> float:
    """Fraction of heatmap mass inside the mask; 0.0 for an all-zero heatmap.

    Shapes must already agree; see score_heatmap for resolution mediation.
    Sums run in float64 with a fixed per-backend accumulation order.
    """
    h = np.asarray(heatmap, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    if h.shape != m.shape:
        raise ShapeMismatchError(f"heatmap shape {h.shape} != mask shape {m.shape}")
    if h.size and float(h.min()) < 0.0:
        raise ValueError("heatmap entries must be >= 0")
    inside, total = kernels.mass_sums(h, m)
    if total == 0.0:
        return 0.0
    score = inside / total
    # Guard against accumulation rounding nudging the ratio past a bound.
    return min(1.0, max(0.0, score))


@dataclass(frozen=True)
class ScoreResult:
    rma: float
    flags: tuple[str, ...] = ()
    iou: float | None = None

    @property
    def degenerate(self) -> bool:
        return DEGENERATE_HEATMAP in self.flags


def score_heatmap(
    heatmap: np.ndarray, mask: np.ndarray, iou_tau: float | None = None
) -> ScoreResult:
    """Score a heatmap against a mask, mediating resolution differences.

    When shapes differ the heatmap is bilinearly resampled to the mask's
    resolution (masks are annotation ground truth, so they anchor scale).
    An all-zero heatmap scores 0 and is flagged degenerate; downstream
    classification treats flagged evidence as invalid at any threshold.
    An IoU comparison score is included when iou_tau is given.
    """
    h = np.asarray(heatmap, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    if h.ndim != 2 or m.ndim != 2:
        raise ShapeMismatchError(f"heatmap/mask must be 2-d, got {h.shape} and {m.shape}")
    if h.shape != m.shape:
        h = np.maximum(kernels.bilinear_resize(h, m.shape[0], m.shape[1]), 0.0)
    iou_score = None if iou_tau is None else iou(h, m, iou_tau)
    if float(h.sum()) == 0.0:
        return ScoreResult(rma=0.0, flags=(DEGENERATE_HEATMAP,), iou=iou_score)
    return ScoreResult(rma=rma(h, m), iou=iou_score)


def iou(heatmap: np.ndarray, mask: np.ndarray, tau: float = DEFAULT_IOU_TAU) -> float:
    """Intersection-over-union after binarizing the heatmap at tau * max."""
    h = np.asarray(heatmap, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    if h.shape != m.shape:
        raise ShapeMismatchError(f"heatmap shape {h.shape} != mask shape {m.shape}")
    peak = float(h.max()) if h.size else 0.0
    binary = h >= tau * peak if peak > 0.0 else np.zeros_like(h, dtype=bool)
    truth = m == 1.0
    union = int(np.logical_or(binary, truth).sum())
    if union == 0:
        return 0.0
    inter = int(np.logical_and(binary, truth).sum())
    return inter / union


class Quadrant(enum.Enum):
    RR = "RR"
    RW = "RW"
    WR = "WR"
    WW = "WW"


def classify_quadrant(
    pred_correct: bool, rma_score: float, theta: float = DEFAULT_THETA
) -> Quadrant:
    """Boundary rule: a score exactly at theta counts as valid evidence."""
    if not 0.0 <= rma_score <= 1.0:
        raise ValueError(f"rma score must lie in [0, 1], got {rma_score}")
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    valid = rma_score >= theta
    if pred_correct:
        return Quadrant.RR if valid else Quadrant.RW
    return Quadrant.WR if valid else Quadrant.WW


def classify_scored(
    pred_correct: bool, score: ScoreResult, theta: float = DEFAULT_THETA
) -> Quadrant:
    """Like classify_quadrant, but degenerate evidence is invalid at any theta."""
    if score.degenerate:
        return Quadrant.RW if pred_correct else Quadrant.WW
    return classify_quadrant(pred_correct, score.rma, theta)


@dataclass(frozen=True)
class QuadrantTally:
    rr: int = 0
    rw: int = 0
    wr: int = 0
    ww: int = 0

    @property
    def n(self) -> int:
        return self.rr + self.rw + self.wr + self.ww

    def add(self, quadrant: Quadrant) -> "QuadrantTally":
        bump = {q: 0 for q in Quadrant}
        bump[quadrant] = 1
        return QuadrantTally(
            rr=self.rr + bump[Quadrant.RR],
            rw=self.rw + bump[Quadrant.RW],
            wr=self.wr + bump[Quadrant.WR],
            ww=self.ww + bump[Quadrant.WW],
        )

    def merge(self, other: "QuadrantTally") -> "QuadrantTally":
        return QuadrantTally(
            rr=self.rr + other.rr,
            rw=self.rw + other.rw,
            wr=self.wr + other.wr,
            ww=self.ww + other.ww,
        )


def tally(
    records: Iterable[tuple[bool, float]], theta: float = DEFAULT_THETA
) -> QuadrantTally:
    counts = {q: 0 for q in Quadrant}
    for pred_correct, score in records:
        counts[classify_quadrant(pred_correct, score, theta)] += 1
    return QuadrantTally(
        rr=counts[Quadrant.RR],
        rw=counts[Quadrant.RW],
        wr=counts[Quadrant.WR],
        ww=counts[Quadrant.WW],
    )


def pt(t: QuadrantTally, strict: bool = False) -> float | None:
    """Prediction trustworthiness rr/(rr+rw); None when no correct predictions."""
    denom = t.rr + t.rw
    if denom == 0:
        if strict:
            raise UndefinedMetricError("prediction trustworthiness undefined: rr+rw = 0")
        return None
    return t.rr / denom


def ir(t: QuadrantTally, strict: bool = False) -> float | None:
    """Inference reliability rr/(rr+wr); None when no valid-evidence samples."""
    denom = t.rr + t.wr
    if denom == 0:
        if strict:
            raise UndefinedMetricError("inference reliability undefined: rr+wr = 0")
        return None
    return t.rr / denom


@dataclass(frozen=True)
class EvalSummary:
    tally: QuadrantTally
    n: int
    accuracy: float
    pt: float | None
    ir: float | None
    valid_evidence_rate: float
    pt_reason: str | None = None
    ir_reason: str | None = None
    tags: Mapping[str, str] | None = None


def summarize(t: QuadrantTally, tags: Mapping[str, str] | None = None) -> EvalSummary:
    if t.n == 0:
        raise EmptyCohortError("cannot summarize an empty tally")
    return EvalSummary(
        tally=t,
        n=t.n,
        accuracy=(t.rr + t.rw) / t.n,
        pt=pt(t),
        ir=ir(t),
        valid_evidence_rate=(t.rr + t.wr) / t.n,
        pt_reason=None if t.rr + t.rw else "no correctly predicted samples (rr+rw = 0)",
        ir_reason=None if t.rr + t.wr else "no valid-evidence samples (rr+wr = 0)",
        tags=dict(tags) if tags else None,
    )
