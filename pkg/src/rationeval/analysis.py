"""Grouped evaluation, severity sweeps, and report emission.

Samples are partitioned by (method, corruption, severity) taken from their
manifest tags, tallied, and summarized. Sweeps arrange the summaries per
(method, corruption) in severity order, with the method's clean group
(corruption empty, severity 0) prepended as the strength-0 point.

Every output is deterministic in the input set: records are sorted by
sample_id, groups lexicographically, and numbers render with 9 significant
digits (round-half-even) identically in CSV and JSON. Reports carry no
timestamps or input paths, so rerunning on the same cohort reproduces the
same bytes.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import __version__ as _VERSION
from . import REPORT_SCHEMA
from .errors import EmptyReportError, MissingTagError, TagError
from .metrics import (
    DEFAULT_THETA,
    EvalSummary,
    QuadrantTally,
    ScoreResult,
    classify_scored,
    summarize,
)

CSV_COLUMNS = (
    "method", "corruption", "severity", "n", "rr", "rw", "wr", "ww",
    "accuracy", "pt", "ir", "valid_evidence_rate",
)


@dataclass(frozen=True, order=True)
class GroupKey:
    method: str
    corruption: str
    severity: int

    def __post_init__(self) -> None:
        if self.severity < 0:
            raise TagError(f"severity must be >= 0, got {self.severity}")
        if (self.severity == 0) != (self.corruption == ""):
            raise TagError(
                f"severity 0 and empty corruption imply each other, got "
                f"corruption={self.corruption!r} severity={self.severity}"
            )


@dataclass(frozen=True)
class ScoredSample:
    sample_id: str
    pred_correct: bool
    score: ScoreResult
    tags: Mapping[str, str] = field(default_factory=dict)


def group_key_for(sample_id: str, tags: Mapping[str, str]) -> GroupKey:
    method = tags.get("method")
    if method is None:
        raise MissingTagError(f"sample {sample_id!r} lacks the 'method' tag")
    corruption = tags.get("corruption", "")
    raw_severity = tags.get("severity", "0")
    try:
        severity = int(raw_severity)
    except ValueError:
        raise TagError(f"sample {sample_id!r}: severity {raw_severity!r} is not an integer") from None
    try:
        return GroupKey(method=method, corruption=corruption, severity=severity)
    except TagError as exc:
        raise TagError(f"sample {sample_id!r}: {exc}") from None


def group_and_summarize(
    records: Iterable[ScoredSample], theta: float = DEFAULT_THETA
) -> dict[GroupKey, EvalSummary]:
    """Partition records by group key and summarize each group's tally."""
    ordered = sorted(records, key=lambda r: r.sample_id)
    tallies: dict[GroupKey, QuadrantTally] = {}
    for rec in ordered:
        key = group_key_for(rec.sample_id, rec.tags)
        quadrant = classify_scored(rec.pred_correct, rec.score, theta)
        tallies[key] = tallies.get(key, QuadrantTally()).add(quadrant)
    out: dict[GroupKey, EvalSummary] = {}
    for key in sorted(tallies):
        tags = {
            "method": key.method,
            "corruption": key.corruption,
            "severity": str(key.severity),
        }
        out[key] = summarize(tallies[key], tags)
    return out


@dataclass(frozen=True)
class SweepSeries:
    method: str
    corruption: str
    points: tuple[tuple[int, EvalSummary], ...]


def build_sweeps(summaries: Mapping[GroupKey, EvalSummary]) -> list[SweepSeries]:
    """One severity-ordered series per (method, corruption).

    A method's clean summary becomes the severity-0 point of each of its
    corruption series; a method with only clean data yields a single
    one-point series with an empty corruption name.
    """
    clean: dict[str, EvalSummary] = {}
    per_pair: dict[tuple[str, str], list[tuple[int, EvalSummary]]] = {}
    for key in sorted(summaries):
        if key.corruption == "":
            clean[key.method] = summaries[key]
        else:
            per_pair.setdefault((key.method, key.corruption), []).append(
                (key.severity, summaries[key])
            )
    series: list[SweepSeries] = []
    methods_with_corruption = {m for m, _ in per_pair}
    for method, summary in sorted(clean.items()):
        if method not in methods_with_corruption:
            series.append(SweepSeries(method=method, corruption="", points=((0, summary),)))
    for (method, corruption), points in sorted(per_pair.items()):
        points = sorted(points, key=lambda p: p[0])
        if method in clean:
            points = [(0, clean[method])] + points
        series.append(SweepSeries(method=method, corruption=corruption, points=tuple(points)))
    series.sort(key=lambda s: (s.method, s.corruption))
    return series


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def format_sig9(value: float) -> str:
    """9-significant-digit decimal text (round-half-even, no exponent bloat)."""
    return format(value, ".9g")


def _round_sig9(value: float | None) -> float | None:
    if value is None:
        return None
    return float(format_sig9(value))


def _summary_json_obj(key: GroupKey, s: EvalSummary) -> dict:
    return {
        "method": key.method,
        "corruption": key.corruption,
        "severity": key.severity,
        "n": s.n,
        "tally": {"rr": s.tally.rr, "rw": s.tally.rw, "wr": s.tally.wr, "ww": s.tally.ww},
        "accuracy": _round_sig9(s.accuracy),
        "pt": _round_sig9(s.pt),
        "pt_reason": s.pt_reason,
        "ir": _round_sig9(s.ir),
        "ir_reason": s.ir_reason,
        "valid_evidence_rate": _round_sig9(s.valid_evidence_rate),
    }


def render_json(
    summaries: Mapping[GroupKey, EvalSummary],
    sweeps: list[SweepSeries],
    provenance: Mapping[str, object] | None = None,
) -> bytes:
    report = {
        "schema": REPORT_SCHEMA,
        "provenance": {"toolkit_version": _VERSION, **(dict(provenance or {}))},
        "groups": [_summary_json_obj(key, summaries[key]) for key in sorted(summaries)],
        "sweeps": [
            {
                "method": sw.method,
                "corruption": sw.corruption,
                "points": [
                    _summary_json_obj(
                        GroupKey(
                            sw.method,
                            sw.corruption if sev else "",
                            sev,
                        ),
                        summary,
                    )
                    for sev, summary in sw.points
                ],
            }
            for sw in sweeps
        ],
    }
    return (json.dumps(report, indent=2) + "\n").encode("utf-8")


def render_csv(summaries: Mapping[GroupKey, EvalSummary]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for key in sorted(summaries):
        s = summaries[key]
        writer.writerow([
            key.method,
            key.corruption,
            key.severity,
            s.n,
            s.tally.rr,
            s.tally.rw,
            s.tally.wr,
            s.tally.ww,
            format_sig9(s.accuracy),
            "" if s.pt is None else format_sig9(s.pt),
            "" if s.ir is None else format_sig9(s.ir),
            format_sig9(s.valid_evidence_rate),
        ])
    return buf.getvalue().encode("utf-8")


_METRICS = ("accuracy", "pt", "ir", "valid_evidence_rate")
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")

_CHART_W = 480
_CHART_H = 240
_MARGIN_L = 56
_MARGIN_R = 150
_MARGIN_T = 36
_MARGIN_B = 40


def _metric_value(summary: EvalSummary, metric: str) -> float | None:
    return getattr(summary, metric)


def _render_chart(
    x_off: int, y_off: int, corruption: str, metric: str,
    series: list[SweepSeries], severities: list[int],
) -> list[str]:
    inner_w = _CHART_W - _MARGIN_L - _MARGIN_R
    inner_h = _CHART_H - _MARGIN_T - _MARGIN_B
    left = x_off + _MARGIN_L
    top = y_off + _MARGIN_T
    smin, smax = severities[0], severities[-1]
    span = (smax - smin) or 1

    def sx(sev: int) -> float:
        return left + (sev - smin) / span * inner_w

    def sy(val: float) -> float:
        return top + (1.0 - val) * inner_h

    label = corruption if corruption else "clean"
    parts = [
        f'<text x="{x_off + _MARGIN_L}" y="{y_off + 20}" class="title">'
        f"{_esc(metric)} by severity ({_esc(label)})</text>",
        f'<rect x="{left}" y="{top}" width="{inner_w}" height="{inner_h}" class="frame"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(tick)
        parts.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + inner_w}" y2="{y:.2f}" class="grid"/>')
        parts.append(f'<text x="{left - 6}" y="{y + 4:.2f}" class="ylab">{tick:g}</text>')
    for sev in severities:
        x = sx(sev)
        parts.append(
            f'<text x="{x:.2f}" y="{top + inner_h + 16}" class="xlab">{sev}</text>'
        )
    parts.append(
        f'<text x="{left + inner_w / 2:.2f}" y="{top + inner_h + 32}" class="xlab">severity</text>'
    )
    for idx, sw in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        coords = [
            f"{sx(sev):.2f},{sy(val):.2f}"
            for sev, summary in sw.points
            if (val := _metric_value(summary, metric)) is not None
        ]
        if coords:
            parts.append(
                f'<polyline points="{" ".join(coords)}" fill="none" stroke="{color}" stroke-width="2"/>'
            )
        for sev, summary in sw.points:
            val = _metric_value(summary, metric)
            if val is not None:
                parts.append(
                    f'<circle cx="{sx(sev):.2f}" cy="{sy(val):.2f}" r="2.5" fill="{color}"/>'
                )
        ly = top + 14 * idx
        lx = left + inner_w + 12
        parts.append(f'<line x1="{lx}" y1="{ly + 4}" x2="{lx + 16}" y2="{ly + 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 20}" y="{ly + 8}" class="legend">{_esc(sw.method)}</text>')
    return parts


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_svg(sweeps: list[SweepSeries]) -> bytes:
    """Self-contained SVG: a grid of line charts, one per metric x corruption."""
    by_corruption: dict[str, list[SweepSeries]] = {}
    for sw in sorted(sweeps, key=lambda s: (s.corruption, s.method)):
        by_corruption.setdefault(sw.corruption, []).append(sw)
    corruptions = sorted(by_corruption)
    rows = len(corruptions)
    cols = len(_METRICS)
    width = cols * _CHART_W
    height = rows * _CHART_H
    body: list[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        "<style>"
        "text{font-family:Helvetica,Arial,sans-serif;font-size:11px;fill:#333}"
        ".title{font-size:13px;font-weight:bold}"
        ".frame{fill:none;stroke:#999;stroke-width:1}"
        ".grid{stroke:#ddd;stroke-width:0.5}"
        ".ylab{text-anchor:end}.xlab{text-anchor:middle}"
        "</style>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for r, corruption in enumerate(corruptions):
        series = by_corruption[corruption]
        severities = sorted({sev for sw in series for sev, _ in sw.points})
        for c, metric in enumerate(_METRICS):
            body.extend(
                _render_chart(c * _CHART_W, r * _CHART_H, corruption, metric, series, severities)
            )
    body.append("</svg>")
    return ("\n".join(body) + "\n").encode("utf-8")


def emit_report(
    summaries: Mapping[GroupKey, EvalSummary],
    sweeps: list[SweepSeries] | None = None,
    fmt: str = "json",
    provenance: Mapping[str, object] | None = None,
) -> bytes:
    if not summaries:
        raise EmptyReportError("no group summaries to report")
    if sweeps is None:
        sweeps = build_sweeps(summaries)
    if fmt == "json":
        return render_json(summaries, sweeps, provenance)
    if fmt == "csv":
        return render_csv(summaries)
    if fmt == "svg":
        return render_svg(sweeps)
    raise ValueError(f"format must be json, csv, or svg, got {fmt!r}")
