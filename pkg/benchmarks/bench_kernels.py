#!/usr/bin/env python3
"""Compare the jitted and pure-numpy kernel backends.

The backend is fixed at import time by RATIONEVAL_BACKEND, so this script
re-executes itself once per backend and merges the results:

    python3 benchmarks/bench_kernels.py [--reps N]

Each worker times every kernel on identical seeded inputs (best of `reps`
runs, after a warmup pass) and fingerprints the outputs so the parent can
verify the backends agree before printing the table: bilinear resampling
and the seeded stream must match bit for bit, reductions to 1e-9.
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time

import numpy as np

AGREE_TOL = 1e-9


def make_cases():
    rng = np.random.default_rng(123)
    heat = rng.random((512, 512))
    mask = (rng.random((512, 512)) < 0.4).astype(np.float64)
    attn = rng.random((12, 197, 197))
    grad = rng.standard_normal((12, 197, 197))
    small = rng.random((14, 14))
    boxes = np.sort(rng.random((20, 4)) * 500.0, axis=1)[:, [0, 2, 1, 3]]
    return {
        "mass_sums(512x512)": ("mass_sums", (heat, mask), 200),
        "head_mean_positive_product(12x197x197)": (
            "head_mean_positive_product", (grad, attn), 20),
        "bilinear_resize(14x14 -> 224x224)": (
            "bilinear_resize", (small, 224, 224), 100),
        "rasterize_boxes(20 on 500x500)": (
            "rasterize_boxes", (boxes, 500, 500), 100),
        "unit_doubles(1M)": ("unit_doubles", (2024, 0, 1_000_000), 20),
    }


def fingerprint(value):
    if isinstance(value, tuple):
        return [float(v) for v in value]
    return hashlib.sha256(np.ascontiguousarray(value).tobytes()).hexdigest()


def run_worker(reps):
    from rationeval import kernels

    kernels.warmup()
    out = {"backend": kernels.BACKEND, "results": {}}
    for label, (fn_name, args, inner) in make_cases().items():
        fn = getattr(kernels, fn_name)
        fn(*args)  # warm any remaining compilation
        best = float("inf")
        for _ in range(reps):
            t0 = time.perf_counter()
            for _ in range(inner):
                result = fn(*args)
            best = min(best, (time.perf_counter() - t0) / inner)
        out["results"][label] = {
            "seconds": best,
            "fingerprint": fingerprint(result),
        }
    json.dump(out, sys.stdout)


def spawn(backend, reps):
    env = dict(os.environ, RATIONEVAL_BACKEND=backend)
    proc = subprocess.run(
        [sys.executable, __file__, "--worker", "--reps", str(reps)],
        env=env, capture_output=True, text=True,
    )
    if proc.returncode != 0:
        sys.exit(f"{backend} worker failed:\n{proc.stderr}")
    return json.loads(proc.stdout)


def check_agreement(label, a, b):
    fa, fb = a["fingerprint"], b["fingerprint"]
    if isinstance(fa, list):
        for x, y in zip(fa, fb):
            scale = max(1.0, abs(x), abs(y))
            if abs(x - y) > AGREE_TOL * scale:
                sys.exit(f"backends disagree on {label}: {x!r} vs {y!r}")
    elif fa != fb:
        sys.exit(f"backends disagree bit-for-bit on {label}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=5, help="timing repetitions")
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        run_worker(args.reps)
        return

    numba = spawn("numba", args.reps)
    plain = spawn("numpy", args.reps)

    width = max(len(k) for k in make_cases()) + 2
    print(f"{'kernel':<{width}} {'numba':>12} {'numpy':>12} {'speedup':>9}")
    print("-" * (width + 36))
    for label in make_cases():
        a = numba["results"][label]
        b = plain["results"][label]
        check_agreement(label, a, b)
        ratio = b["seconds"] / a["seconds"]
        print(
            f"{label:<{width}} {a['seconds'] * 1e6:>10.1f}us "
            f"{b['seconds'] * 1e6:>10.1f}us {ratio:>8.2f}x"
        )
    print("\nbackends agree on all outputs (bit-exact where promised).")


if __name__ == "__main__":
    main()
