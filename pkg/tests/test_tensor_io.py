import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rationeval import tensor_io
from rationeval.errors import (
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


def raw_npy(header: str, payload: bytes) -> bytes:
    """Assemble NPY bytes around an arbitrary header string."""
    hlen = len(header) + 1
    pad = 64 - ((10 + hlen) % 64)
    return (
        tensor_io.MAGIC
        + bytes((1, 0))
        + struct.pack("<H", hlen + pad)
        + header.encode("ascii")
        + b" " * pad
        + b"\n"
        + payload
    )


class TestNpyParse:
    def test_format_identity(self):
        payload = struct.pack("<4f", 1, 2, 3, 4)
        arr = tensor_io.parse_npy_bytes(
            raw_npy("{'descr': '<f4', 'fortran_order': False, 'shape': (2, 2), }", payload)
        )
        assert arr.dtype == np.float32
        assert np.array_equal(arr, [[1, 2], [3, 4]])

    def test_loaded_arrays_are_read_only(self):
        arr = tensor_io.parse_npy_bytes(tensor_io.build_npy_bytes(np.zeros((2, 2))))
        with pytest.raises(ValueError):
            arr[0, 0] = 1.0

    def test_bad_magic(self):
        with pytest.raises(MagicMismatchError):
            tensor_io.parse_npy_bytes(b"\x93NUMPZ" + b"\x00" * 100)

    def test_bad_version(self):
        good = tensor_io.build_npy_bytes(np.zeros((2, 2), dtype=np.float32))
        bad = good[:6] + bytes((2, 0)) + good[8:]
        with pytest.raises(NpyFormatError, match="version"):
            tensor_io.parse_npy_bytes(bad)

    def test_unsupported_dtype(self):
        with pytest.raises(UnsupportedDtypeError):
            tensor_io.parse_npy_bytes(
                raw_npy("{'descr': '<i4', 'fortran_order': False, 'shape': (1, 1), }", b"\x00" * 4)
            )

    def test_fortran_order_rejected(self):
        with pytest.raises(UnsupportedLayoutError):
            tensor_io.parse_npy_bytes(
                raw_npy("{'descr': '<f4', 'fortran_order': True, 'shape': (1, 1), }", b"\x00" * 4)
            )

    @pytest.mark.parametrize("shape", ["(4,)", "(2, 2, 2, 2)", "(0, 3)", "()"])
    def test_rank_and_dims_policed(self, shape):
        with pytest.raises(UnsupportedLayoutError):
            tensor_io.parse_npy_bytes(
                raw_npy(
                    f"{{'descr': '<f4', 'fortran_order': False, 'shape': {shape}, }}",
                    b"\x00" * 64,
                )
            )

    def test_truncated_payload(self):
        with pytest.raises(TruncatedPayloadError):
            tensor_io.parse_npy_bytes(
                raw_npy("{'descr': '<f8', 'fortran_order': False, 'shape': (2, 2), }", b"\x00" * 31)
            )

    def test_trailing_bytes_rejected(self):
        good = tensor_io.build_npy_bytes(np.zeros((2, 2), dtype=np.float64))
        with pytest.raises(NpyFormatError, match="trailing"):
            tensor_io.parse_npy_bytes(good + b"\x00")

    def test_unaligned_header_rejected(self):
        header = "{'descr': '<f4', 'fortran_order': False, 'shape': (1, 1), }"
        hlen = len(header) + 1
        data = (
            tensor_io.MAGIC + bytes((1, 0)) + struct.pack("<H", hlen)
            + header.encode() + b"\n" + b"\x00" * 4
        )
        with pytest.raises(NpyFormatError, match="aligned"):
            tensor_io.parse_npy_bytes(data)

    def test_header_gibberish(self):
        with pytest.raises(NpyFormatError):
            tensor_io.parse_npy_bytes(raw_npy("not a dict at all padpadpad", b""))

    def test_extra_header_keys_rejected(self):
        with pytest.raises(NpyFormatError):
            tensor_io.parse_npy_bytes(
                raw_npy(
                    "{'descr': '<f4', 'fortran_order': False, 'shape': (1, 1), 'x': 1, }",
                    b"\x00" * 4,
                )
            )


class TestNpyWrite:
    def test_single_value_roundtrip(self, tmp_path):
        t = np.array([[0.5]], dtype=np.float64)
        tensor_io.write_npy(t, tmp_path / "t.npy")
        back = tensor_io.read_npy(tmp_path / "t.npy")
        assert back.shape == (1, 1) and back[0, 0] == 0.5

    def test_3d_header_shape(self):
        data = tensor_io.build_npy_bytes(np.zeros((2, 3, 3), dtype=np.float32))
        assert b"'shape': (2, 3, 3), " in data[:128]

    def test_write_rejects_bad_dtype_and_rank(self, tmp_path):
        with pytest.raises(UnsupportedDtypeError):
            tensor_io.write_npy(np.zeros((2, 2), dtype=np.int32), tmp_path / "x.npy")
        with pytest.raises(UnsupportedLayoutError):
            tensor_io.write_npy(np.zeros(4, dtype=np.float32), tmp_path / "x.npy")

    def test_interop_with_reference_implementation(self):
        # Same bytes as numpy's writer, both directions readable.
        rng = np.random.default_rng(7)
        for shape in [(1, 1), (3, 5), (12, 50, 50)]:
            for dt in (np.float32, np.float64):
                arr = rng.standard_normal(shape).astype(dt)
                mine = tensor_io.build_npy_bytes(arr)
                buf = io.BytesIO()
                np.save(buf, arr)
                assert mine == buf.getvalue()
                assert np.array_equal(np.load(io.BytesIO(mine)), arr)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailureError):
            tensor_io.read_npy(tmp_path / "nope.npy")

    @settings(max_examples=60, deadline=None)
    @given(
        shape=st.one_of(
            st.tuples(st.integers(1, 6), st.integers(1, 6)),
            st.tuples(st.integers(1, 4), st.integers(1, 5), st.integers(1, 5)),
        ),
        f64=st.booleans(),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_roundtrip_bit_exact(self, shape, f64, seed):
        rng = np.random.default_rng(seed)
        arr = rng.standard_normal(shape).astype(np.float64 if f64 else np.float32)
        back = tensor_io.parse_npy_bytes(tensor_io.build_npy_bytes(arr))
        assert back.dtype == arr.dtype
        assert back.tobytes() == arr.tobytes()


class TestMask:
    def test_binary_mask_loads(self, tmp_path):
        tensor_io.write_npy(np.array([[0.0, 1.0]], dtype=np.float32), tmp_path / "m.npy")
        m = tensor_io.load_mask(tmp_path / "m.npy")
        assert m.dtype == np.float64
        assert np.array_equal(m, [[0.0, 1.0]])

    def test_non_binary_rejected(self, tmp_path):
        tensor_io.write_npy(np.array([[0.0, 0.5]]), tmp_path / "m.npy")
        with pytest.raises(MaskNotBinaryError, match="0.5"):
            tensor_io.load_mask(tmp_path / "m.npy")

    def test_3d_mask_rejected(self, tmp_path):
        tensor_io.write_npy(np.zeros((2, 2, 2)), tmp_path / "m.npy")
        with pytest.raises(MaskNotBinaryError):
            tensor_io.load_mask(tmp_path / "m.npy")


def entry_line(**overrides) -> str:
    import json

    base = {
        "sample_id": "a",
        "true_class": 1,
        "pred_class": 1,
        "heatmap_path": "h.npy",
        "mask_path": "m.npy",
    }
    base.update(overrides)
    return json.dumps({k: v for k, v in base.items() if v is not None})


class TestManifest:
    def test_empty_file(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text("")
        assert len(tensor_io.load_manifest(p)) == 0

    def test_four_variant_fixture(self, tmp_path):
        cap = {
            "attention_paths": ["a0.npy"],
            "gradient_paths": ["g0.npy"],
            "cls_index": 0,
            "grid": [2, 2],
            "target_class": 3,
        }
        lines = [
            entry_line(sample_id="hm"),
            entry_line(sample_id="hb", mask_path=None, bboxes=[[0, 0, 4, 4]], image_size=[8, 8]),
            entry_line(sample_id="cm", heatmap_path=None, capture=cap),
            entry_line(
                sample_id="cb", heatmap_path=None, capture=cap,
                mask_path=None, bboxes=[[1, 1, 2, 2]], image_size=[4, 4],
            ),
        ]
        p = tmp_path / "m.jsonl"
        p.write_text("".join(line + "\n" for line in lines))
        man = tensor_io.load_manifest(p)
        assert [e.sample_id for e in man] == ["hm", "hb", "cm", "cb"]
        assert man.entries[0].heatmap_path and man.entries[0].mask_path
        assert man.entries[1].box_truth and man.entries[1].box_truth.width == 8
        assert man.entries[2].capture and man.entries[2].capture.grid == (2, 2)
        # non_image_tokens defaults to just the cls token
        assert man.entries[2].capture.non_image_tokens == (0,)
        assert man.entries[3].capture and man.entries[3].box_truth

    def test_duplicate_sample_id(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text(entry_line() + "\n" + entry_line() + "\n")
        with pytest.raises(DuplicateSampleIdError, match="line 2"):
            tensor_io.load_manifest(p)

    def test_bad_json_names_line(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text(entry_line() + "\n{oops\n")
        with pytest.raises(ParseError, match="line 2"):
            tensor_io.load_manifest(p)

    @pytest.mark.parametrize(
        "kill", ["sample_id", "true_class", "pred_class", "heatmap_path", "mask_path"]
    )
    def test_missing_required_pieces(self, tmp_path, kill):
        p = tmp_path / "m.jsonl"
        p.write_text(entry_line(**{kill: None}) + "\n")
        with pytest.raises(MissingFieldError, match="line 1"):
            tensor_io.load_manifest(p)

    def test_conflicting_evidence(self, tmp_path):
        cap = {
            "attention_paths": ["a.npy"], "gradient_paths": ["g.npy"],
            "cls_index": 0, "grid": [1, 1], "target_class": 0,
        }
        p = tmp_path / "m.jsonl"
        p.write_text(entry_line(capture=cap) + "\n")
        with pytest.raises(ConflictingEvidenceError):
            tensor_io.load_manifest(p)

    def test_conflicting_ground_truth(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text(entry_line(bboxes=[[0, 0, 1, 1]], image_size=[2, 2]) + "\n")
        with pytest.raises(ConflictingEvidenceError):
            tensor_io.load_manifest(p)

    @pytest.mark.parametrize(
        "box",
        [[0, 0, 0, 1], [0, 0, 1, 0], [-1, 0, 1, 1], [0, 0, 9, 1], [3, 0, 2, 1]],
    )
    def test_bbox_invariant_policed_at_load(self, tmp_path, box):
        p = tmp_path / "m.jsonl"
        p.write_text(entry_line(mask_path=None, bboxes=[box], image_size=[8, 8]) + "\n")
        with pytest.raises(ParseError):
            tensor_io.load_manifest(p)

    def test_unknown_field_rejected(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text(entry_line(bogus=1) + "\n")
        with pytest.raises(ParseError, match="bogus"):
            tensor_io.load_manifest(p)

    def test_tags_must_be_string_map(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text(entry_line(tags={"severity": 3}) + "\n")
        with pytest.raises(ParseError, match="tags"):
            tensor_io.load_manifest(p)

    def test_capture_path_count_mismatch(self, tmp_path):
        cap = {
            "attention_paths": ["a.npy", "b.npy"], "gradient_paths": ["g.npy"],
            "cls_index": 0, "grid": [1, 1], "target_class": 0,
        }
        p = tmp_path / "m.jsonl"
        p.write_text(entry_line(heatmap_path=None, capture=cap) + "\n")
        with pytest.raises(ParseError, match="gradient paths"):
            tensor_io.load_manifest(p)

    def test_write_then_load_roundtrip(self, tmp_path):
        entries = [
            tensor_io.SampleEntry(
                sample_id=f"s{i}", true_class=i, pred_class=0,
                heatmap_path=f"h{i}.npy", mask_path=f"m{i}.npy",
                tags={"method": "ZS", "corruption": "", "severity": "0"},
            )
            for i in range(3)
        ]
        p = tmp_path / "m.jsonl"
        tensor_io.write_manifest(entries, p)
        back = tensor_io.load_manifest(p)
        assert list(back) == entries
