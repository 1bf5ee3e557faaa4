"""Numeric kernel dispatch.

Two interchangeable backends live here: a numba-jitted one and a pure-numpy
one. Selection happens once at import time from the RATIONEVAL_BACKEND
environment variable:

    auto    use numba when importable, else numpy (default)
    numba   require numba; raise if it cannot be imported
    numpy   force the pure-numpy fallback

``BACKEND`` records which one won. All public functions coerce their array
arguments to C-contiguous float64 so callers may pass f4 data straight from
disk. The seeded-generator functions (splitmix64_fill / unit_doubles) are
bit-identical across backends; the floating reductions agree to ~1e-12 but
may differ in the last ulp because summation order differs.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import RationEvalError


def _load_backend():
    choice = os.environ.get("RATIONEVAL_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise RationEvalError(
            f"RATIONEVAL_BACKEND must be one of auto/numba/numpy, got {choice!r}"
        )
    if choice == "numpy":
        from . import _numpy_backend
        return _numpy_backend
    try:
        from . import _numba_backend
        return _numba_backend
    except ImportError:
        if choice == "numba":
            raise RationEvalError(
                "RATIONEVAL_BACKEND=numba but numba is not importable"
            ) from None
        from . import _numpy_backend
        return _numpy_backend


_IMPL = _load_backend()
BACKEND: str = _IMPL.NAME


def _f64_2d(arr: np.ndarray, name: str) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    if out.ndim != 2:
        raise RationEvalError(f"{name} must be 2-d, got shape {arr.shape}")
    return out


def _f64_3d(arr: np.ndarray, name: str) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    if out.ndim != 3:
        raise RationEvalError(f"{name} must be 3-d, got shape {arr.shape}")
    return out


def mass_sums(heatmap: np.ndarray, mask: np.ndarray) -> tuple[float, float]:
    """Sum of heatmap values under the mask, and the total heatmap sum."""
    return _IMPL.mass_sums(_f64_2d(heatmap, "heatmap"), _f64_2d(mask, "mask"))


def head_mean_positive_product(attn: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """mean over heads of clip(grad * attn, min=0); inputs (H, T, T)."""
    a = _f64_3d(attn, "attn")
    g = _f64_3d(grad, "grad")
    if a.shape != g.shape:
        raise RationEvalError(
            f"attention/gradient shape mismatch: {a.shape} vs {g.shape}"
        )
    return _IMPL.head_mean_positive_product(a, g)


def head_mean_positive(grad: np.ndarray) -> np.ndarray:
    """mean over heads of clip(grad, min=0); input (H, T, T)."""
    return _IMPL.head_mean_positive(_f64_3d(grad, "grad"))


def bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-anchored bilinear resample of a 2-d map to (out_h, out_w)."""
    if out_h < 1 or out_w < 1:
        raise RationEvalError(f"resize target must be positive, got {(out_h, out_w)}")
    s = _f64_2d(src, "src")
    if s.shape == (out_h, out_w):
        return s.copy()
    return _IMPL.bilinear_resize(s, out_h, out_w)


def rasterize_boxes(boxes: np.ndarray, height: int, width: int) -> np.ndarray:
    """Union of half-open [x0,x1) x [y0,y1) boxes as a float64 0/1 mask."""
    b = np.ascontiguousarray(boxes, dtype=np.float64)
    if b.ndim != 2 or b.shape[1] != 4:
        raise RationEvalError(f"boxes must have shape (n, 4), got {boxes.shape}")
    return _IMPL.rasterize_boxes(b, int(height), int(width))


def splitmix64_fill(seed: int, start: int, count: int) -> np.ndarray:
    """uint64 stream values at counter positions [start, start+count)."""
    return _IMPL.splitmix64_fill(np.uint64(seed), np.uint64(start), int(count))


def unit_doubles(seed: int, start: int, count: int) -> np.ndarray:
    """float64 values in [0, 1) drawn from the splitmix64 counter stream."""
    return _IMPL.unit_doubles(np.uint64(seed), np.uint64(start), int(count))


def splitmix64(seed: int, index: int) -> int:
    """Scalar splitmix64 output at one counter position (pure Python).

    z = (seed + (index+1) * 0x9E3779B97F4A7C15) mod 2^64, then the standard
    xorshift-multiply finalizer. Kept in Python so other implementations can
    be checked against an unambiguous reference.
    """
    mask = (1 << 64) - 1
    z = (seed + (index + 1) * 0x9E3779B97F4A7C15) & mask
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & mask
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & mask
    z ^= z >> 31
    return z


def warmup() -> None:
    """Force JIT compilation now so later timings measure steady state."""
    fn = getattr(_IMPL, "warmup", None)
    if fn is not None:
        fn()
