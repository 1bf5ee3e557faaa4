"""Exception types shared across the toolkit.

Every error raised on user input carries enough context (sample id, manifest
line, file path) to locate the offending record.
"""


class RationEvalError(Exception):
    """Base class for all toolkit errors."""


# --- array file format ---------------------------------------------------


class NpyFormatError(RationEvalError):
    """Array file violates the supported NPY subset."""


class MagicMismatchError(NpyFormatError):
    """File does not start with the NPY magic bytes."""


class UnsupportedDtypeError(NpyFormatError):
    """Dtype other than little-endian float32/float64."""


class UnsupportedLayoutError(NpyFormatError):
    """Fortran-ordered payloads are not supported."""


class TruncatedPayloadError(NpyFormatError):
    """Fewer data bytes than the header's shape requires."""


class IoFailureError(RationEvalError):
    """Underlying OS-level read/write failure."""


# --- manifest ------------------------------------------------------------


class ManifestError(RationEvalError):
    """Manifest file violates the JSONL sample-entry schema."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ParseError(ManifestError):
    """A manifest line is not valid JSON or not an object."""


class DuplicateSampleIdError(ManifestError):
    """Two manifest entries share a sample_id."""


class MissingFieldError(ManifestError):
    """A required entry field is absent."""


class ConflictingEvidenceError(ManifestError):
    """An entry declares more than one evidence or ground-truth variant."""


# --- masks, metrics ------------------------------------------------------


class MaskNotBinaryError(RationEvalError):
    """A loaded mask contains values other than exactly 0.0 or 1.0."""


class ShapeMismatchError(RationEvalError):
    """Two arrays that must share a shape do not."""


class BoxOutOfBoundsError(RationEvalError):
    """Bounding box extends outside the image."""


class DegenerateBoxError(RationEvalError):
    """Bounding box has zero or negative extent."""


class EmptyCohortError(RationEvalError):
    """No samples to evaluate or summarize."""


# --- attribution ---------------------------------------------------------


class EmptyLayerListError(RationEvalError):
    """Layer aggregation called with no relevance maps."""


class GridMismatchError(RationEvalError):
    """Token row length does not match the declared patch grid."""


class CaptureValidationError(RationEvalError):
    """Attention capture violates its declared metadata."""


# --- analysis / synthesis ------------------------------------------------


class MissingTagError(RationEvalError):
    """A record lacks a tag required for grouping."""


class TagError(RationEvalError):
    """Group tags are inconsistent (e.g. clean data with severity > 0)."""


class EmptyReportError(RationEvalError):
    """Report emission called with no group summaries."""


class InfeasibleTargetError(RationEvalError):
    """No heatmap can reach the requested relevant-mass score on this mask."""


class UndefinedMetricError(RationEvalError):
    """A ratio metric was demanded where its denominator is zero."""
