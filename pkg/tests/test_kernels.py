import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bilinear_oracle, box_mask_oracle
from rationeval import kernels
from rationeval.kernels import _numba_backend as nb
from rationeval.kernels import _numpy_backend as npy

BACKENDS = (npy, nb)


def rand(shape, seed):
    return np.random.default_rng(seed).random(shape)


def test_backend_selected():
    assert kernels.BACKEND in ("numba", "numpy")


def test_env_flag_forces_numpy_backend():
    env = dict(os.environ, RATIONEVAL_BACKEND="numpy")
    out = subprocess.run(
        [sys.executable, "-c", "from rationeval import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_env_flag_rejects_nonsense():
    env = dict(os.environ, RATIONEVAL_BACKEND="cuda")
    out = subprocess.run(
        [sys.executable, "-c", "import rationeval.kernels"],
        env=env, capture_output=True, text=True,
    )
    assert out.returncode != 0
    assert "RATIONEVAL_BACKEND" in out.stderr


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.NAME)
def test_mass_sums_against_python_sum(impl):
    h = rand((17, 23), 0)
    m = (rand((17, 23), 1) > 0.5).astype(np.float64)
    inside, total = impl.mass_sums(h, m)
    assert inside == pytest.approx(sum(v for v, b in zip(h.ravel(), m.ravel()) if b), abs=1e-12)
    assert total == pytest.approx(float(sum(h.ravel().tolist())), abs=1e-12)


def test_backends_agree_on_reductions():
    a = rand((4, 9, 9), 2)
    g = rand((4, 9, 9), 3) - 0.5
    assert np.allclose(
        npy.head_mean_positive_product(a, g),
        nb.head_mean_positive_product(a, g),
        rtol=0, atol=1e-12,
    )
    assert np.allclose(
        npy.head_mean_positive(g), nb.head_mean_positive(g), rtol=0, atol=1e-12
    )


def test_bilinear_backends_bit_identical():
    src = rand((5, 7), 4)
    for oh, ow in [(1, 1), (5, 7), (11, 13), (2, 20)]:
        a = npy.bilinear_resize(src, oh, ow)
        b = nb.bilinear_resize(src, oh, ow)
        assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.NAME)
@pytest.mark.parametrize("src_shape,out_shape", [
    ((2, 2), (4, 4)), ((3, 5), (7, 2)), ((1, 4), (3, 3)), ((6, 1), (2, 8)), ((4, 4), (1, 1)),
])
def test_bilinear_matches_oracle(impl, src_shape, out_shape):
    src = rand(src_shape, 5)
    got = impl.bilinear_resize(src, *out_shape)
    want = np.array(bilinear_oracle(src.tolist(), *out_shape))
    assert np.allclose(got, want, rtol=0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    value=st.floats(-10, 10),
    sh=st.integers(1, 5), sw=st.integers(1, 5),
    oh=st.integers(1, 9), ow=st.integers(1, 9),
)
def test_bilinear_preserves_constants(value, sh, sw, oh, ow):
    src = np.full((sh, sw), value)
    out = kernels.bilinear_resize(src, oh, ow)
    assert np.allclose(out, value, rtol=0, atol=1e-12)


def test_rasterize_matches_membership_oracle():
    rng = np.random.default_rng(6)
    for _ in range(25):
        n = rng.integers(1, 4)
        boxes = []
        for _ in range(n):
            x0, y0 = rng.uniform(0, 6, 2)
            boxes.append((x0, y0, x0 + rng.uniform(0.5, 5), y0 + rng.uniform(0.5, 5)))
        arr = np.array(boxes)
        for impl in BACKENDS:
            got = impl.rasterize_boxes(arr, 9, 11)
            assert np.array_equal(got, box_mask_oracle(boxes, 11, 9))


class TestSeededStream:
    def test_vector_matches_scalar_reference(self):
        seed = 0xDEADBEEF
        vec = kernels.splitmix64_fill(seed, 0, 8)
        ref = [kernels.splitmix64(seed, i) for i in range(8)]
        assert vec.tolist() == ref

    def test_backends_bit_identical(self):
        for seed, start in [(0, 0), (1, 5), (2**64 - 1, 1000)]:
            a = npy.unit_doubles(np.uint64(seed), np.uint64(start), 64)
            b = nb.unit_doubles(np.uint64(seed), np.uint64(start), 64)
            assert a.tobytes() == b.tobytes()

    def test_counter_offsets_slice_one_stream(self):
        whole = kernels.unit_doubles(9, 0, 100)
        tail = kernels.unit_doubles(9, 60, 40)
        assert np.array_equal(whole[60:], tail)

    def test_range_and_spread(self):
        u = kernels.unit_doubles(3, 0, 10_000)
        assert float(u.min()) >= 0.0 and float(u.max()) < 1.0
        assert abs(float(u.mean()) - 0.5) < 0.02

    def test_seeds_decorrelate(self):
        assert not np.array_equal(kernels.unit_doubles(1, 0, 16), kernels.unit_doubles(2, 0, 16))


def test_dispatch_coerces_f4_input():
    h32 = rand((4, 4), 8).astype(np.float32)
    m = np.ones((4, 4))
    inside, total = kernels.mass_sums(h32, m)
    assert inside == pytest.approx(total)
