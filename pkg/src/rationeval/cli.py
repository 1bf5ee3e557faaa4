"""Command-line entry point.

Subcommands:

    attribute   captures -> heatmap files + rewritten manifest
    evaluate    heatmaps + ground truth -> per-sample scores + grouped report
    sweep       like evaluate, but emits only the severity-sweep report
    report      re-render reports from an existing scores file
    synth       generate a planted synthetic cohort

Exit codes: 0 success, 2 malformed input (any toolkit error), 3 empty
cohort. Flags may also come from a JSON config file via --config; explicit
flags win on conflict. Reruns with unchanged inputs overwrite their outputs
byte-identically (no timestamps, stable ordering).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, attribution, metrics, synth, tensor_io
from .errors import (
    EmptyCohortError,
    IoFailureError,
    ParseError,
    RationEvalError,
)
from .metrics import ScoreResult
from .tensor_io import Manifest, SampleEntry

_FORMATS = ("json", "csv", "svg")

_CONFIG_KEYS = {
    "manifest", "theta", "attribution", "layer_mode", "iou_tau",
    "out", "format", "workers", "seed", "scores", "spec",
}


@dataclass(frozen=True)
class RunConfig:
    manifest: str | None = None
    theta: float = metrics.DEFAULT_THETA
    attribution: str = "grad_times_attn"
    layer_mode: str = "last"
    iou_tau: float | None = None
    out: str = "."
    formats: tuple[str, ...] = ("json", "csv")
    workers: int = 1
    seed: int | None = None
    scores: str | None = None
    spec: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta <= 1.0:
            raise RationEvalError(f"theta must lie in [0, 1], got {self.theta}")
        if self.workers < 1:
            raise RationEvalError(f"workers must be >= 1, got {self.workers}")
        if self.attribution not in attribution.ATTRIBUTION_METHODS:
            raise RationEvalError(
                f"attribution must be one of {attribution.ATTRIBUTION_METHODS}"
            )
        if self.layer_mode not in attribution.LAYER_MODES:
            raise RationEvalError(f"layer-mode must be one of {attribution.LAYER_MODES}")
        if self.iou_tau is not None and not 0.0 <= self.iou_tau <= 1.0:
            raise RationEvalError(f"iou-tau must lie in [0, 1], got {self.iou_tau}")
        for fmt in self.formats:
            if fmt not in _FORMATS:
                raise RationEvalError(f"format must be among {_FORMATS}, got {fmt!r}")


def _load_config_file(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailureError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"config {path}: invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(raw, dict):
        raise RationEvalError(f"config {path} must hold a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise RationEvalError(f"config {path} has unknown keys {sorted(unknown)}")
    return raw


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    file_values = _load_config_file(args.config) if getattr(args, "config", None) else {}

    def pick(name: str, default):
        flag = getattr(args, name, None)
        if flag is not None:
            return flag
        if name in file_values:
            return file_values[name]
        return default

    fmt = pick("format", "json,csv")
    formats = tuple(f.strip() for f in str(fmt).split(",") if f.strip())
    return RunConfig(
        manifest=pick("manifest", None),
        theta=float(pick("theta", metrics.DEFAULT_THETA)),
        attribution=str(pick("attribution", "grad_times_attn")),
        layer_mode=str(pick("layer_mode", "last")),
        iou_tau=(lambda v: None if v is None else float(v))(pick("iou_tau", None)),
        out=str(pick("out", ".")),
        formats=formats,
        workers=int(pick("workers", 1)),
        seed=(lambda v: None if v is None else int(v))(pick("seed", None)),
        scores=pick("scores", None),
        spec=pick("spec", None),
    )


def _with_sample_context(exc: RationEvalError, sample_id: str) -> RationEvalError:
    msg = f"sample {sample_id!r}: {exc}"
    try:
        return type(exc)(msg)
    except TypeError:
        return RationEvalError(msg)


def _ground_truth_mask(entry: SampleEntry, base: Path) -> np.ndarray:
    if entry.mask_path is not None:
        return tensor_io.load_mask(base / entry.mask_path)
    assert entry.box_truth is not None
    bt = entry.box_truth
    return metrics.mask_from_bboxes(bt.boxes, bt.width, bt.height)


def _score_entry(
    entry: SampleEntry, base: str, iou_tau: float | None
) -> analysis.ScoredSample:
    base_path = Path(base)
    try:
        if entry.heatmap_path is None:
            raise RationEvalError(
                "entry carries capture evidence; run `attribute` first"
            )
        heat = tensor_io.read_npy(base_path / entry.heatmap_path)
        if heat.ndim != 2:
            raise RationEvalError(f"heatmap must be 2-d, got shape {heat.shape}")
        mask = _ground_truth_mask(entry, base_path)
        score = metrics.score_heatmap(heat, mask, iou_tau=iou_tau)
    except RationEvalError as exc:
        raise _with_sample_context(exc, entry.sample_id) from None
    return analysis.ScoredSample(
        sample_id=entry.sample_id,
        pred_correct=entry.pred_correct,
        score=score,
        tags=dict(entry.tags),
    )


def _score_manifest(
    manifest: Manifest, base: Path, cfg: RunConfig
) -> list[analysis.ScoredSample]:
    if cfg.workers == 1:
        scored = [_score_entry(e, str(base), cfg.iou_tau) for e in manifest]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            scored = list(
                pool.map(
                    _score_entry,
                    manifest.entries,
                    [str(base)] * len(manifest),
                    [cfg.iou_tau] * len(manifest),
                    chunksize=64,
                )
            )
    scored.sort(key=lambda r: r.sample_id)
    return scored


def _scores_jsonl(scored: list[analysis.ScoredSample], theta: float) -> bytes:
    lines = []
    for rec in scored:
        quadrant = metrics.classify_scored(rec.pred_correct, rec.score, theta)
        obj: dict = {
            "sample_id": rec.sample_id,
            "pred_correct": rec.pred_correct,
            "rma": rec.score.rma,
            "quadrant": quadrant.value,
            "flags": list(rec.score.flags),
        }
        if rec.score.iou is not None:
            obj["iou"] = rec.score.iou
        obj["tags"] = dict(rec.tags)
        lines.append(json.dumps(obj))
    return ("".join(line + "\n" for line in lines)).encode("utf-8")


def _provenance(cfg: RunConfig) -> dict:
    prov: dict = {
        "theta": cfg.theta,
        "attribution": cfg.attribution,
        "layer_mode": cfg.layer_mode,
    }
    if cfg.iou_tau is not None:
        prov["iou_tau"] = cfg.iou_tau
    return prov


def _write(path: Path, data: bytes) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def _emit_reports(
    cfg: RunConfig,
    scored: list[analysis.ScoredSample],
    out: Path,
    stem: str,
) -> dict[analysis.GroupKey, metrics.EvalSummary]:
    if not scored:
        raise EmptyCohortError("no samples to evaluate")
    summaries = analysis.group_and_summarize(scored, cfg.theta)
    sweeps = analysis.build_sweeps(summaries)
    for fmt in cfg.formats:
        data = analysis.emit_report(summaries, sweeps, fmt, provenance=_provenance(cfg))
        _write(out / f"{stem}.{fmt}", data)
    return summaries


def _require_manifest(cfg: RunConfig) -> tuple[Manifest, Path]:
    if not cfg.manifest:
        raise RationEvalError("--manifest is required")
    manifest = tensor_io.load_manifest(cfg.manifest)
    return manifest, Path(cfg.manifest).resolve().parent


def _rebase(path_str: str, src_base: Path, dst_base: Path) -> str:
    resolved = (src_base / path_str).resolve()
    return os.path.relpath(resolved, dst_base)


def cmd_attribute(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    manifest, base = _require_manifest(cfg)
    out = Path(cfg.out).resolve()
    (out / "heatmaps").mkdir(parents=True, exist_ok=True)
    rewritten: list[SampleEntry] = []
    for entry in manifest:
        if entry.capture is None:
            rewritten.append(_rebased_entry(entry, base, out))
            continue
        try:
            capture = attribution.load_capture(entry.capture, base)
            if entry.mask_path is not None:
                mask = tensor_io.load_mask(base / entry.mask_path)
                out_shape = mask.shape
            else:
                assert entry.box_truth is not None
                out_shape = (entry.box_truth.height, entry.box_truth.width)
            heat = attribution.attribute_capture(
                capture, out_shape, method=cfg.attribution, layer_mode=cfg.layer_mode
            )
        except RationEvalError as exc:
            raise _with_sample_context(exc, entry.sample_id) from None
        heat_rel = f"heatmaps/{entry.sample_id}.npy"
        tensor_io.write_npy(heat, out / heat_rel)
        rewritten.append(
            SampleEntry(
                sample_id=entry.sample_id,
                true_class=entry.true_class,
                pred_class=entry.pred_class,
                heatmap_path=heat_rel,
                mask_path=(
                    _rebase(entry.mask_path, base, out)
                    if entry.mask_path is not None
                    else None
                ),
                box_truth=entry.box_truth,
                tags=dict(entry.tags),
            )
        )
    tensor_io.write_manifest(rewritten, out / "manifest.jsonl")
    print(f"attributed {sum(1 for e in manifest if e.capture)} captures -> {out / 'manifest.jsonl'}")
    return 0


def _rebased_entry(entry: SampleEntry, src_base: Path, dst_base: Path) -> SampleEntry:
    return SampleEntry(
        sample_id=entry.sample_id,
        true_class=entry.true_class,
        pred_class=entry.pred_class,
        heatmap_path=(
            _rebase(entry.heatmap_path, src_base, dst_base)
            if entry.heatmap_path is not None
            else None
        ),
        capture=entry.capture,
        mask_path=(
            _rebase(entry.mask_path, src_base, dst_base)
            if entry.mask_path is not None
            else None
        ),
        box_truth=entry.box_truth,
        tags=dict(entry.tags),
    )


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    manifest, base = _require_manifest(cfg)
    if len(manifest) == 0:
        raise EmptyCohortError(f"manifest {cfg.manifest} holds no samples")
    out = Path(cfg.out).resolve()
    scored = _score_manifest(manifest, base, cfg)
    _write(out / "scores.jsonl", _scores_jsonl(scored, cfg.theta))
    summaries = _emit_reports(cfg, scored, out, "report")
    total = sum(s.n for s in summaries.values())
    print(f"evaluated {total} samples in {len(summaries)} groups -> {out}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    manifest, base = _require_manifest(cfg)
    if len(manifest) == 0:
        raise EmptyCohortError(f"manifest {cfg.manifest} holds no samples")
    out = Path(cfg.out).resolve()
    scored = _score_manifest(manifest, base, cfg)
    summaries = _emit_reports(cfg, scored, out, "sweep")
    series = analysis.build_sweeps(summaries)
    print(f"built {len(series)} sweep series -> {out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if not cfg.scores:
        raise RationEvalError("--scores is required")
    try:
        text = Path(cfg.scores).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot read {cfg.scores}: {exc}") from exc
    scored: list[analysis.ScoredSample] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
        try:
            scored.append(
                analysis.ScoredSample(
                    sample_id=obj["sample_id"],
                    pred_correct=bool(obj["pred_correct"]),
                    score=ScoreResult(
                        rma=float(obj["rma"]),
                        flags=tuple(obj.get("flags", [])),
                        iou=obj.get("iou"),
                    ),
                    tags=dict(obj.get("tags", {})),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad scores record: {exc}", lineno) from None
    if not scored:
        raise EmptyCohortError(f"scores file {cfg.scores} holds no samples")
    out = Path(cfg.out).resolve()
    _emit_reports(cfg, scored, out, "report")
    print(f"re-rendered reports for {len(scored)} samples -> {out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if not cfg.spec:
        raise RationEvalError("--spec is required")
    try:
        raw = json.loads(Path(cfg.spec).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailureError(f"cannot read spec {cfg.spec}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"spec {cfg.spec}: invalid JSON: {exc.msg}", exc.lineno) from None
    groups: dict[analysis.GroupKey, metrics.QuadrantTally] = {}
    try:
        for g in raw["groups"]:
            key = analysis.GroupKey(
                method=g["method"],
                corruption=g.get("corruption", ""),
                severity=int(g.get("severity", 0)),
            )
            t = g["tally"]
            groups[key] = metrics.QuadrantTally(
                rr=int(t["rr"]), rw=int(t["rw"]), wr=int(t["wr"]), ww=int(t["ww"])
            )
        spec = synth.PlantedCohortSpec(
            groups=groups,
            image_height=int(raw.get("image_height", 16)),
            image_width=int(raw.get("image_width", 16)),
            seed=int(raw["seed"]) if cfg.seed is None else cfg.seed,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RationEvalError(f"spec {cfg.spec}: {exc}") from None
    out = Path(cfg.out).resolve()
    manifest = synth.gen_planted_cohort(spec, out)
    print(f"generated {len(manifest)} samples in {len(groups)} groups -> {out}")
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file; explicit flags win")
    sub.add_argument("--manifest", help="path to the JSONL manifest")
    sub.add_argument("--theta", type=float, help="evidence validity threshold (default 0.5)")
    sub.add_argument(
        "--attribution", choices=attribution.ATTRIBUTION_METHODS,
        help="heatmap reduction (default grad_times_attn)",
    )
    sub.add_argument(
        "--layer-mode", dest="layer_mode", choices=attribution.LAYER_MODES,
        help="multi-layer aggregation (default last)",
    )
    sub.add_argument("--iou-tau", dest="iou_tau", type=float, help="also report IoU at this binarization fraction")
    sub.add_argument("--out", help="output directory (default .)")
    sub.add_argument("--format", help="comma-separated report formats: json,csv,svg")
    sub.add_argument("--workers", type=int, help="parallel scoring processes (default 1)")
    sub.add_argument("--seed", type=int, help="seed override for generators")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rationeval",
        description="Rationality evaluation for image-classifier explanations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_attr = sub.add_parser("attribute", help="turn attention captures into heatmap files")
    _add_common(p_attr)
    p_attr.set_defaults(func=cmd_attribute)

    p_eval = sub.add_parser("evaluate", help="score heatmaps and emit grouped reports")
    _add_common(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="emit corruption-severity sweep reports")
    _add_common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_report = sub.add_parser("report", help="re-render reports from a scores file")
    _add_common(p_report)
    p_report.add_argument("--scores", help="scores.jsonl from a previous evaluate run")
    p_report.set_defaults(func=cmd_report)

    p_synth = sub.add_parser("synth", help="generate a planted synthetic cohort")
    _add_common(p_synth)
    p_synth.add_argument("--spec", help="JSON cohort spec")
    p_synth.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EmptyCohortError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except RationEvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
