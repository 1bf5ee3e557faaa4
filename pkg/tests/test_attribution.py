import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bilinear_oracle, grad_only_oracle, layer_mean_oracle, relevance_oracle
from rationeval import attribution
from rationeval.errors import (
    CaptureValidationError,
    EmptyLayerListError,
    GridMismatchError,
    ShapeMismatchError,
)


def test_golden_single_head():
    attn = np.array([[[1.0, 0.0], [0.0, 1.0]]])
    grad = np.array([[[2.0, -1.0], [0.0, 3.0]]])
    out = attribution.relevance_single_layer(attn, grad)
    assert np.array_equal(out, [[2.0, 0.0], [0.0, 3.0]])


def test_two_heads_clip_before_mean():
    # head products [[2,0],[0,3]] and [[-2,0],[0,-3]]: the negatives vanish
    # before averaging, they do not cancel the positives.
    attn = np.array([[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]])
    grad = np.array([[[2.0, -1.0], [0.0, 3.0]], [[-2.0, 5.0], [0.0, -3.0]]])
    out = attribution.relevance_single_layer(attn, grad)
    assert np.array_equal(out, [[1.0, 0.0], [0.0, 1.5]])


def test_random_capture_matches_triple_loop():
    rng = np.random.default_rng(11)
    attn = rng.random((4, 8, 8))
    grad = rng.standard_normal((4, 8, 8))
    got = attribution.relevance_single_layer(attn, grad)
    want = np.array(relevance_oracle(attn.tolist(), grad.tolist()))
    assert np.allclose(got, want, rtol=0, atol=1e-12)
    got_g = attribution.relevance_grad_only(grad)
    want_g = np.array(grad_only_oracle(grad.tolist()))
    assert np.allclose(got_g, want_g, rtol=0, atol=1e-12)


def test_grad_only_examples():
    grad = np.array([[[2.0, -1.0], [0.0, 3.0]]])
    assert np.array_equal(attribution.relevance_grad_only(grad), [[2.0, 0.0], [0.0, 3.0]])
    assert np.array_equal(
        attribution.relevance_grad_only(-np.ones((3, 2, 2))), np.zeros((2, 2))
    )


def test_unit_gradient_reduces_to_head_mean_attention():
    rng = np.random.default_rng(12)
    attn = rng.random((5, 6, 6))
    out = attribution.relevance_single_layer(attn, np.ones_like(attn))
    assert np.allclose(out, attn.mean(axis=0), rtol=0, atol=1e-12)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        attribution.relevance_single_layer(np.ones((1, 2, 2)), np.ones((1, 3, 3)))
    with pytest.raises(ShapeMismatchError):
        attribution.relevance_single_layer(np.ones((2, 3)), np.ones((2, 3)))


@settings(max_examples=30, deadline=None)
@given(power=st.integers(-8, 8), seed=st.integers(0, 2**16))
def test_positive_homogeneity(power, seed):
    rng = np.random.default_rng(seed)
    attn = rng.random((2, 4, 4))
    grad = rng.standard_normal((2, 4, 4))
    c = 2.0**power
    base = attribution.relevance_single_layer(attn, grad)
    scaled = attribution.relevance_single_layer(attn, c * grad)
    # power-of-two scaling is exact in binary floating point
    assert np.array_equal(scaled, c * base)


def test_relevance_always_non_negative_and_finite():
    rng = np.random.default_rng(13)
    for _ in range(20):
        out = attribution.relevance_single_layer(
            rng.random((3, 5, 5)), rng.standard_normal((3, 5, 5)) * 100
        )
        assert np.all(out >= 0) and np.all(np.isfinite(out))


class TestAggregateLayers:
    def test_single_layer_either_mode(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(attribution.aggregate_layers([m], "last"), m)
        assert np.array_equal(attribution.aggregate_layers([m], "mean"), m)

    def test_two_layer_mean(self):
        out = attribution.aggregate_layers([np.array([[0.0]]), np.array([[2.0]])], "mean")
        assert np.array_equal(out, [[1.0]])

    def test_last_takes_final(self):
        out = attribution.aggregate_layers([np.zeros((2, 2)), np.ones((2, 2))], "last")
        assert np.array_equal(out, np.ones((2, 2)))

    def test_twelve_layers_match_oracle(self):
        rng = np.random.default_rng(14)
        maps = [rng.random((6, 6)) for _ in range(12)]
        got = attribution.aggregate_layers(maps, "mean")
        want = np.array(layer_mean_oracle([m.tolist() for m in maps]))
        assert np.allclose(got, want, rtol=0, atol=1e-12)

    def test_errors(self):
        with pytest.raises(EmptyLayerListError):
            attribution.aggregate_layers([], "last")
        with pytest.raises(ShapeMismatchError):
            attribution.aggregate_layers([np.ones((2, 2)), np.ones((3, 3))], "mean")
        with pytest.raises(ValueError):
            attribution.aggregate_layers([np.ones((2, 2))], "sum")


class TestProjection:
    def test_single_patch_is_constant(self):
        rel = np.array([[0.1, 0.7], [0.2, 0.3]])
        out = attribution.project_to_heatmap(rel, 0, (1, 1), (5, 3))
        assert out.shape == (5, 3)
        assert np.allclose(out, 0.7, rtol=0, atol=0)

    def test_identity_size_keeps_patches(self):
        # 5 tokens: cls + 2x2 grid; row 0 carries the patch values
        rel = np.zeros((5, 5))
        rel[0, 1:] = [1.0, 2.0, 3.0, 4.0]
        out = attribution.project_to_heatmap(rel, 0, (2, 2), (2, 2))
        assert np.array_equal(out, [[1.0, 2.0], [3.0, 4.0]])

    def test_corner_anchored_ramp_matches_oracle(self):
        rel = np.zeros((5, 5))
        rel[0, 1:] = [0.0, 0.0, 0.0, 1.0]
        out = attribution.project_to_heatmap(rel, 0, (2, 2), (4, 4))
        want = np.array(bilinear_oracle([[0.0, 0.0], [0.0, 1.0]], 4, 4))
        assert np.allclose(out, want, rtol=0, atol=1e-12)
        assert out[3, 3] == 1.0 and out[0, 0] == 0.0

    def test_non_image_tokens_dropped(self):
        # tokens: [cls, extra, p0, p1]; grid 1x2
        rel = np.zeros((4, 4))
        rel[0] = [9.0, 8.0, 1.0, 2.0]
        out = attribution.project_to_heatmap(rel, 0, (1, 2), (1, 2), non_image_tokens=(0, 1))
        assert np.array_equal(out, [[1.0, 2.0]])

    def test_grid_mismatch_errors(self):
        rel = np.zeros((5, 5))
        with pytest.raises(GridMismatchError):
            attribution.project_to_heatmap(rel, 0, (2, 3), (4, 4))
        with pytest.raises(GridMismatchError):
            attribution.project_to_heatmap(rel, 7, (2, 2), (4, 4))
        with pytest.raises(GridMismatchError):
            attribution.project_to_heatmap(rel, 0, (2, 2), (4, 4), non_image_tokens=(1,))

    @settings(max_examples=25, deadline=None)
    @given(value=st.floats(0, 100), gh=st.integers(1, 4), gw=st.integers(1, 4))
    def test_constant_grid_yields_constant_heatmap(self, value, gh, gw):
        tokens = gh * gw + 1
        rel = np.full((tokens, tokens), value)
        out = attribution.project_to_heatmap(rel, 0, (gh, gw), (9, 9))
        assert np.allclose(out, value, rtol=0, atol=1e-12)


def make_capture(attn, grad, **kw):
    layers = ((np.asarray(attn, float), np.asarray(grad, float)),)
    defaults = dict(target_class=0, cls_index=0, grid=(1, 1), non_image_tokens=(0,))
    defaults.update(kw)
    return attribution.AttentionCapture(layers=layers, **defaults)


class TestCaptureValidation:
    def test_row_sums_enforced(self):
        bad = make_capture([[[0.9, 0.0], [0.3, 0.7]]], np.ones((1, 2, 2)))
        with pytest.raises(CaptureValidationError, match="sum to 1"):
            bad.validate()

    def test_row_sum_tolerance(self):
        ok = make_capture([[[0.50005, 0.49998], [0.3, 0.7]]], np.ones((1, 2, 2)))
        ok.validate()

    def test_cls_index_range(self):
        cap = make_capture([[[0.5, 0.5], [0.5, 0.5]]], np.ones((1, 2, 2)), cls_index=2)
        with pytest.raises(CaptureValidationError, match="cls_index"):
            cap.validate()

    def test_grid_consistency(self):
        cap = make_capture([[[0.5, 0.5], [0.5, 0.5]]], np.ones((1, 2, 2)), grid=(2, 2))
        with pytest.raises(GridMismatchError):
            cap.validate()

    def test_layer_token_drift(self):
        a1 = np.full((1, 2, 2), 0.5)
        a2 = np.full((1, 3, 3), 1.0 / 3)
        cap = attribution.AttentionCapture(
            layers=((a1, np.ones((1, 2, 2))), (a2, np.ones((1, 3, 3)))),
            target_class=0, cls_index=0, grid=(1, 1), non_image_tokens=(0,),
        )
        with pytest.raises(CaptureValidationError, match="token count"):
            cap.validate()


def test_attribute_capture_hand_fixture():
    # cls row of clip(grad*attn) is [0.6, 0.8]; dropping cls leaves one patch
    # of 0.8, so the projected 2x2 heatmap is constant 0.8.
    attn = [[[0.6, 0.4], [0.3, 0.7]]]
    grad = [[[1.0, 2.0], [-1.0, 0.5]]]
    cap = make_capture(attn, grad)
    heat = attribution.attribute_capture(cap, (2, 2))
    assert np.allclose(heat, 0.8, rtol=0, atol=1e-15)


def test_attribute_capture_grad_only_and_mean():
    # patch value is the clipped gradient at (cls, token 1): 2.0 in layer 1,
    # 0.0 in layer 2, so last -> 0 and mean -> 1.
    layer1 = (np.full((1, 2, 2), 0.5), np.array([[[1.0, 2.0], [0.5, 0.5]]]))
    layer2 = (np.full((1, 2, 2), 0.5), np.array([[[3.0, 0.0], [0.0, 1.0]]]))
    cap = attribution.AttentionCapture(
        layers=(layer1, layer2), target_class=0, cls_index=0, grid=(1, 1),
        non_image_tokens=(0,),
    )
    last = attribution.attribute_capture(cap, (1, 1), method="grad_only", layer_mode="last")
    assert np.array_equal(last, [[0.0]])
    mean = attribution.attribute_capture(cap, (1, 1), method="grad_only", layer_mode="mean")
    assert np.allclose(mean, [[1.0]], rtol=0, atol=1e-15)


def test_attribute_capture_rejects_unknown_method():
    cap = make_capture([[[0.5, 0.5], [0.5, 0.5]]], np.ones((1, 2, 2)))
    with pytest.raises(ValueError):
        attribution.attribute_capture(cap, (2, 2), method="gradcam")
