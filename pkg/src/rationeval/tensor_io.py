"""Bit-exact array file IO and manifest parsing.

Array files use a deliberately small subset of the NPY v1.0 format: C-order,
little-endian, '<f4' or '<f8', rank 2 or 3. The subset keeps the parser a
few dozen lines and makes round-trips bit-exact; files produced by standard
deep-learning tooling for these dtypes are accepted unchanged.

The manifest is JSON Lines, one sample per line, so parse errors can name an
exact line and large cohorts stream without loading a giant JSON array.
"""

from __future__ import annotations

import ast
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .errors import (
    ConflictingEvidenceError,
    DuplicateSampleIdError,
    IoFailureError,
    MagicMismatchError,
    MaskNotBinaryError,
    MissingFieldError,
    NpyFormatError,
    ParseError,
    TruncatedPayloadError,
    UnsupportedDtypeError,
    UnsupportedLayoutError,
)

MAGIC = b"\x93NUMPY"
_HEADER_ALIGN = 64
_DESCRS = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


# ---------------------------------------------------------------------------
# NPY subset
# ---------------------------------------------------------------------------

def parse_npy_bytes(data: bytes) -> np.ndarray:
    """Decode one NPY v1.0 buffer into a read-only 2-d or 3-d array."""
    if data[:6] != MAGIC:
        raise MagicMismatchError(f"bad magic {data[:6]!r}, expected {MAGIC!r}")
    if len(data) < 10:
        raise TruncatedPayloadError("file ends inside the fixed header")
    major, minor = data[6], data[7]
    if (major, minor) != (1, 0):
        raise NpyFormatError(f"unsupported format version {major}.{minor}")
    (hlen,) = struct.unpack_from("<H", data, 8)
    if len(data) < 10 + hlen:
        raise TruncatedPayloadError("file ends inside the header text")
    header = data[10 : 10 + hlen]
    if not header.endswith(b"\n"):
        raise NpyFormatError("header text not terminated by newline")
    if (10 + hlen) % _HEADER_ALIGN != 0:
        raise NpyFormatError(f"header section not {_HEADER_ALIGN}-byte aligned")
    try:
        meta = ast.literal_eval(header.decode("ascii").strip())
    except (ValueError, SyntaxError, UnicodeDecodeError) as exc:
        raise NpyFormatError(f"unparseable header: {exc}") from None
    if not isinstance(meta, dict) or set(meta) != {"descr", "fortran_order", "shape"}:
        raise NpyFormatError(f"header must carry exactly descr/fortran_order/shape, got {meta!r}")

    descr = meta["descr"]
    if descr not in _DESCRS:
        raise UnsupportedDtypeError(f"descr {descr!r} not supported (only '<f4'/'<f8')")
    if meta["fortran_order"] is not False:
        raise UnsupportedLayoutError("fortran_order must be False (row-major only)")
    shape = meta["shape"]
    if (
        not isinstance(shape, tuple)
        or len(shape) not in (2, 3)
        or not all(isinstance(d, int) and d >= 1 for d in shape)
    ):
        raise UnsupportedLayoutError(f"shape must be 2-d or 3-d with positive dims, got {shape!r}")

    dtype = _DESCRS[descr]
    expected = int(np.prod(shape)) * dtype.itemsize
    payload = data[10 + hlen :]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"payload holds {len(payload)} bytes, shape {shape} needs {expected}"
        )
    if len(payload) > expected:
        raise NpyFormatError(f"{len(payload) - expected} trailing bytes after payload")
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    arr.flags.writeable = False
    return arr


def build_npy_bytes(arr: np.ndarray) -> bytes:
    """Encode a float32/float64 array of rank 2 or 3 as NPY v1.0 bytes."""
    if arr.ndim not in (2, 3):
        raise UnsupportedLayoutError(f"only rank 2/3 arrays are written, got rank {arr.ndim}")
    if any(d < 1 for d in arr.shape):
        raise UnsupportedLayoutError(f"shape dims must be >= 1, got {arr.shape}")
    if arr.dtype == np.float32:
        descr = "<f4"
    elif arr.dtype == np.float64:
        descr = "<f8"
    else:
        raise UnsupportedDtypeError(f"dtype {arr.dtype} not supported (only f4/f8)")
    out = np.ascontiguousarray(arr, dtype=np.dtype(descr))

    shape_str = "(" + ", ".join(str(d) for d in out.shape) + ")"
    header = f"{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_str}, }}"
    # hlen counts the trailing newline; padlen (1..64) space-pads the whole
    # prefix (magic + version + length field + header text) to a 64 multiple.
    hlen = len(header) + 1
    padlen = _HEADER_ALIGN - ((len(MAGIC) + 2 + 2 + hlen) % _HEADER_ALIGN)
    prefix = MAGIC + bytes((1, 0)) + struct.pack("<H", hlen + padlen)
    return prefix + header.encode("ascii") + b" " * padlen + b"\n" + out.tobytes()


def read_npy(path: str | Path) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc
    try:
        return parse_npy_bytes(data)
    except NpyFormatError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def write_npy(arr: np.ndarray, path: str | Path) -> None:
    data = build_npy_bytes(arr)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def load_mask(path: str | Path) -> np.ndarray:
    """Read a ground-truth mask; every value must be exactly 0.0 or 1.0."""
    arr = read_npy(path)
    if arr.ndim != 2:
        raise MaskNotBinaryError(f"{path}: mask must be 2-d, got shape {arr.shape}")
    values = arr.astype(np.float64)
    if not np.all((values == 0.0) | (values == 1.0)):
        bad = values[(values != 0.0) & (values != 1.0)].flat[0]
        raise MaskNotBinaryError(f"{path}: mask holds non-binary value {bad!r}")
    values.flags.writeable = False
    return values


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CaptureEvidence:
    """Pointers to per-layer attention/gradient files plus capture geometry."""

    attention_paths: tuple[str, ...]
    gradient_paths: tuple[str, ...]
    cls_index: int
    grid: tuple[int, int]
    target_class: int
    non_image_tokens: tuple[int, ...]


@dataclass(frozen=True)
class BoxGroundTruth:
    boxes: tuple[tuple[float, float, float, float], ...]
    width: int
    height: int


@dataclass(frozen=True)
class SampleEntry:
    sample_id: str
    true_class: int
    pred_class: int
    heatmap_path: str | None = None
    capture: CaptureEvidence | None = None
    mask_path: str | None = None
    box_truth: BoxGroundTruth | None = None
    tags: Mapping[str, str] = field(default_factory=dict)

    @property
    def pred_correct(self) -> bool:
        return self.pred_class == self.true_class

    def to_json_obj(self) -> dict:
        obj: dict = {
            "sample_id": self.sample_id,
            "true_class": self.true_class,
            "pred_class": self.pred_class,
        }
        if self.heatmap_path is not None:
            obj["heatmap_path"] = self.heatmap_path
        if self.capture is not None:
            obj["capture"] = {
                "attention_paths": list(self.capture.attention_paths),
                "gradient_paths": list(self.capture.gradient_paths),
                "cls_index": self.capture.cls_index,
                "grid": list(self.capture.grid),
                "target_class": self.capture.target_class,
                "non_image_tokens": list(self.capture.non_image_tokens),
            }
        if self.mask_path is not None:
            obj["mask_path"] = self.mask_path
        if self.box_truth is not None:
            obj["bboxes"] = [list(b) for b in self.box_truth.boxes]
            obj["image_size"] = [self.box_truth.width, self.box_truth.height]
        if self.tags:
            obj["tags"] = dict(self.tags)
        return obj


@dataclass(frozen=True)
class Manifest:
    entries: tuple[SampleEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[SampleEntry]:
        return iter(self.entries)


_TOP_KEYS = {
    "sample_id", "true_class", "pred_class", "heatmap_path", "capture",
    "mask_path", "bboxes", "image_size", "tags",
}


def _want_int(obj: dict, key: str, line: int) -> int:
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        if key not in obj:
            raise MissingFieldError(f"missing field {key!r}", line)
        raise ParseError(f"field {key!r} must be an integer, got {v!r}", line)
    return v


def _parse_capture(raw: object, line: int) -> CaptureEvidence:
    if not isinstance(raw, dict):
        raise ParseError(f"capture must be an object, got {type(raw).__name__}", line)
    for key in ("attention_paths", "gradient_paths", "cls_index", "grid", "target_class"):
        if key not in raw:
            raise MissingFieldError(f"capture missing field {key!r}", line)
    att = raw["attention_paths"]
    grad = raw["gradient_paths"]
    if (
        not isinstance(att, list) or not isinstance(grad, list)
        or not att or not all(isinstance(p, str) for p in att + grad)
    ):
        raise ParseError("capture paths must be non-empty lists of strings", line)
    if len(att) != len(grad):
        raise ParseError(
            f"capture has {len(att)} attention paths but {len(grad)} gradient paths", line
        )
    cls_index = raw["cls_index"]
    target = raw["target_class"]
    grid = raw["grid"]
    if not isinstance(cls_index, int) or isinstance(cls_index, bool) or cls_index < 0:
        raise ParseError(f"cls_index must be a non-negative integer, got {cls_index!r}", line)
    if not isinstance(target, int) or isinstance(target, bool):
        raise ParseError(f"target_class must be an integer, got {target!r}", line)
    if (
        not isinstance(grid, list) or len(grid) != 2
        or not all(isinstance(g, int) and not isinstance(g, bool) and g >= 1 for g in grid)
    ):
        raise ParseError(f"grid must be [gh, gw] with positive integers, got {grid!r}", line)
    non_image = raw.get("non_image_tokens", [cls_index])
    if (
        not isinstance(non_image, list)
        or not all(isinstance(t, int) and not isinstance(t, bool) and t >= 0 for t in non_image)
        or len(set(non_image)) != len(non_image)
    ):
        raise ParseError(f"non_image_tokens must be distinct non-negative ints, got {non_image!r}", line)
    if cls_index not in non_image:
        raise ParseError("non_image_tokens must include cls_index", line)
    extra = set(raw) - {
        "attention_paths", "gradient_paths", "cls_index", "grid", "target_class",
        "non_image_tokens",
    }
    if extra:
        raise ParseError(f"unknown capture fields {sorted(extra)}", line)
    return CaptureEvidence(
        attention_paths=tuple(att),
        gradient_paths=tuple(grad),
        cls_index=cls_index,
        grid=(grid[0], grid[1]),
        target_class=target,
        non_image_tokens=tuple(non_image),
    )


def _parse_boxes(obj: dict, line: int) -> BoxGroundTruth:
    if "image_size" not in obj:
        raise MissingFieldError("bboxes given without image_size", line)
    size = obj["image_size"]
    if (
        not isinstance(size, list) or len(size) != 2
        or not all(isinstance(d, int) and not isinstance(d, bool) and d >= 1 for d in size)
    ):
        raise ParseError(f"image_size must be [width, height] of positive ints, got {size!r}", line)
    width, height = size
    raw_boxes = obj["bboxes"]
    if not isinstance(raw_boxes, list) or not raw_boxes:
        raise ParseError("bboxes must be a non-empty list", line)
    boxes = []
    for b in raw_boxes:
        if (
            not isinstance(b, list) or len(b) != 4
            or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in b)
        ):
            raise ParseError(f"each bbox must be [x_min, y_min, x_max, y_max], got {b!r}", line)
        x0, y0, x1, y1 = (float(c) for c in b)
        if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
            raise ParseError(
                f"bbox {b!r} violates 0 <= min < max <= {width}x{height}", line
            )
        boxes.append((x0, y0, x1, y1))
    return BoxGroundTruth(boxes=tuple(boxes), width=width, height=height)


def parse_sample_entry(obj: object, line: int) -> SampleEntry:
    if not isinstance(obj, dict):
        raise ParseError(f"entry must be a JSON object, got {type(obj).__name__}", line)
    extra = set(obj) - _TOP_KEYS
    if extra:
        raise ParseError(f"unknown fields {sorted(extra)}", line)

    sample_id = obj.get("sample_id")
    if sample_id is None:
        raise MissingFieldError("missing field 'sample_id'", line)
    if not isinstance(sample_id, str) or not sample_id:
        raise ParseError(f"sample_id must be a non-empty string, got {sample_id!r}", line)
    true_class = _want_int(obj, "true_class", line)
    pred_class = _want_int(obj, "pred_class", line)

    has_heatmap = "heatmap_path" in obj
    has_capture = "capture" in obj
    if has_heatmap and has_capture:
        raise ConflictingEvidenceError(
            f"sample {sample_id!r} carries both heatmap_path and capture evidence", line
        )
    if not has_heatmap and not has_capture:
        raise MissingFieldError(f"sample {sample_id!r} has no evidence variant", line)
    heatmap_path = None
    capture = None
    if has_heatmap:
        heatmap_path = obj["heatmap_path"]
        if not isinstance(heatmap_path, str) or not heatmap_path:
            raise ParseError(f"heatmap_path must be a non-empty string, got {heatmap_path!r}", line)
    else:
        capture = _parse_capture(obj["capture"], line)

    has_mask = "mask_path" in obj
    has_boxes = "bboxes" in obj
    if has_mask and has_boxes:
        raise ConflictingEvidenceError(
            f"sample {sample_id!r} carries both mask_path and bboxes ground truth", line
        )
    if not has_mask and not has_boxes:
        raise MissingFieldError(f"sample {sample_id!r} has no ground_truth variant", line)
    mask_path = None
    box_truth = None
    if has_mask:
        mask_path = obj["mask_path"]
        if not isinstance(mask_path, str) or not mask_path:
            raise ParseError(f"mask_path must be a non-empty string, got {mask_path!r}", line)
    else:
        box_truth = _parse_boxes(obj, line)
    if "image_size" in obj and not has_boxes:
        raise ParseError("image_size is only valid alongside bboxes", line)

    tags = obj.get("tags", {})
    if not isinstance(tags, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in tags.items()
    ):
        raise ParseError(f"tags must map strings to strings, got {tags!r}", line)

    return SampleEntry(
        sample_id=sample_id,
        true_class=true_class,
        pred_class=pred_class,
        heatmap_path=heatmap_path,
        capture=capture,
        mask_path=mask_path,
        box_truth=box_truth,
        tags=dict(tags),
    )


def load_manifest(path: str | Path) -> Manifest:
    """Parse a JSONL manifest, rejecting malformed lines with their number."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc

    entries: list[SampleEntry] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
        entry = parse_sample_entry(obj, lineno)
        if entry.sample_id in seen:
            raise DuplicateSampleIdError(
                f"sample_id {entry.sample_id!r} already used on line {seen[entry.sample_id]}",
                lineno,
            )
        seen[entry.sample_id] = lineno
        entries.append(entry)
    return Manifest(entries=tuple(entries))


def write_manifest(manifest: Manifest | list[SampleEntry], path: str | Path) -> None:
    entries = manifest.entries if isinstance(manifest, Manifest) else tuple(manifest)
    lines = [json.dumps(e.to_json_obj()) for e in entries]
    try:
        Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc
