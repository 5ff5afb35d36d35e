"""Domain types, color conversion, and file format round-trips."""

import math

import numpy as np
import pytest
from PIL import Image

from omvid.datamodel import (
    AnnotationEntry,
    AnnotationKind,
    AnnotationRecord,
    CostTable,
    DatasetSplit,
    SuperpixelLabels,
    VideoVolume,
    load_video,
    parse_annotations,
    read_labels,
    read_split,
    read_uncertainty,
    rle_decode,
    rle_encode,
    serialize_annotations,
    srgb_to_lab,
    write_annotations,
    write_labels,
    write_split,
    write_uncertainty,
)
from omvid.errors import DimensionError, FormatError, ValidationError


# --- independent oracle: scalar CIELAB conversion, written from the published
# formulas without reuse of the library implementation -----------------------

def _lab_oracle(r8, g8, b8):
    def lin(u):
        u = u / 255.0
        return ((u + 0.055) / 1.055) ** 2.4 if u > 0.04045 else u / 12.92

    rl, gl, bl = lin(r8), lin(g8), lin(b8)
    x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl
    y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl
    z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl

    def f(t):
        return t ** (1.0 / 3.0) if t > (6.0 / 29.0) ** 3 else t / (3 * (6.0 / 29.0) ** 2) + 4.0 / 29.0

    fx, fy, fz = f(x / 0.95047), f(y / 1.0), f(z / 1.08883)
    lum = min(max(116 * fy - 16, 0.0), 100.0)  # theoretical range of L
    return lum, 500 * (fx - fy), 200 * (fy - fz)


def test_lab_white():
    lab = srgb_to_lab(np.array([255, 255, 255]))
    assert abs(lab[0] - 100.0) < 0.01
    assert abs(lab[1]) < 0.01 and abs(lab[2]) < 0.01


def test_lab_black():
    lab = srgb_to_lab(np.array([0, 0, 0]))
    assert np.allclose(lab, [0.0, 0.0, 0.0], atol=1e-9)


def test_lab_red_against_oracle():
    lab = srgb_to_lab(np.array([255, 0, 0]))
    assert abs(lab[0] - 53.24) < 0.05
    assert abs(lab[1] - 80.09) < 0.05
    assert abs(lab[2] - 67.20) < 0.05
    oracle = _lab_oracle(255, 0, 0)
    assert np.allclose(lab, oracle, atol=1e-9)


def test_lab_random_pixels_match_oracle():
    rng = np.random.default_rng(7)
    for _ in range(50):
        r, g, b = (int(v) for v in rng.integers(0, 256, size=3))
        lab = srgb_to_lab(np.array([r, g, b]))
        assert np.allclose(lab, _lab_oracle(r, g, b), atol=1e-9)


def test_lab_gray_monotone_in_l():
    grays = srgb_to_lab(np.stack([np.arange(256)] * 3, axis=-1))
    lum = grays[:, 0]
    assert np.all(np.diff(lum) > 0)
    assert lum.min() >= 0.0 and lum.max() <= 100.0 + 1e-9


# --- RLE ---------------------------------------------------------------------

def _rle_decode_oracle(rle, h, w):
    """Independent decoder: expand runs one by one into a flat list."""
    bits = []
    value = 0
    for tok in rle.split():
        bits.extend([value] * int(tok))
        value = 1 - value
    assert len(bits) == h * w
    return np.array(bits, dtype=bool).reshape(h, w)


def test_rle_documented_example():
    # "0 4 3 9" on 4x4: no leading zeros, 4 ones, 3 zeros, 9 ones.
    got = rle_decode("0 4 3 9", (4, 4))
    assert np.array_equal(got, _rle_decode_oracle("0 4 3 9", 4, 4))
    flat = got.ravel()
    assert set(np.flatnonzero(flat).tolist()) == set(range(0, 4)) | set(range(7, 16))


def test_rle_round_trip_random():
    rng = np.random.default_rng(11)
    for _ in range(200):
        h = int(rng.integers(1, 65))
        w = int(rng.integers(1, 65))
        bitmap = rng.random((h, w)) < rng.uniform(0.05, 0.95)
        rle = rle_encode(bitmap)
        assert np.array_equal(rle_decode(rle, (h, w)), bitmap)
        assert np.array_equal(_rle_decode_oracle(rle, h, w), bitmap)


def test_rle_leading_zero_count():
    assert rle_encode(np.ones((2, 2), dtype=bool)) == "0 4"
    assert rle_encode(np.zeros((2, 2), dtype=bool)) == "4"


def test_rle_decode_errors():
    with pytest.raises(FormatError):
        rle_decode("1 2", (2, 2))  # covers 3 of 4 pixels
    with pytest.raises(FormatError):
        rle_decode("0 2 0 2", (2, 2))  # zero-length interior run
    with pytest.raises(FormatError):
        rle_decode("a b", (2, 2))


# --- video loading -----------------------------------------------------------

def _write_frames(tmp_path, arrays):
    d = tmp_path / "vid"
    d.mkdir()
    for i, arr in enumerate(arrays):
        Image.fromarray(arr, "RGB").save(d / f"frame_{i:06d}.png")
    return d


def test_load_video_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    arrays = [rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8) for _ in range(3)]
    vol = load_video(_write_frames(tmp_path, arrays))
    assert vol.shape == (3, 5, 7)
    expect = srgb_to_lab(np.stack(arrays))
    assert np.allclose(vol.voxels, expect)


def test_load_video_missing_frame(tmp_path):
    d = _write_frames(tmp_path, [np.zeros((4, 4, 3), dtype=np.uint8)])
    arr = np.zeros((4, 4, 3), dtype=np.uint8)
    Image.fromarray(arr, "RGB").save(d / "frame_000002.png")
    with pytest.raises(FormatError, match="missing frame index 1"):
        load_video(d)


def test_load_video_dimension_mismatch(tmp_path):
    d = _write_frames(
        tmp_path,
        [np.zeros((4, 4, 3), dtype=np.uint8), np.zeros((4, 5, 3), dtype=np.uint8)],
    )
    with pytest.raises(DimensionError):
        load_video(d)


# --- annotations -------------------------------------------------------------

def test_parse_tag_only(tmp_path):
    f = tmp_path / "ann.jsonl"
    f.write_text('{"video_id":"v1","class":3,"entries":[]}\n')
    (rec,) = parse_annotations(f)
    assert rec.video_id == "v1" and rec.class_tag == 3
    assert rec.is_tag_only() and rec.annotated_frames == ()


def test_parse_box_entry(tmp_path):
    f = tmp_path / "ann.jsonl"
    f.write_text(
        '{"video_id":"v1","class":0,"entries":[{"frame":5,"kind":"box","data":[2,3,10,12]}]}\n'
    )
    (rec,) = parse_annotations(f)
    (entry,) = rec.entries
    assert entry.kind is AnnotationKind.BOX
    assert entry.payload == (2, 3, 10, 12)
    assert entry.frame == 5


def test_parse_mask_needs_dims(tmp_path):
    f = tmp_path / "ann.jsonl"
    f.write_text(
        '{"video_id":"v1","class":0,"entries":[{"frame":0,"kind":"mask","data":{"rle":"0 4"}}]}\n'
    )
    with pytest.raises(ValidationError):
        parse_annotations(f)
    (rec,) = parse_annotations(f, frame_shape=(2, 2))
    assert np.array_equal(rec.entries[0].payload, np.ones((2, 2), dtype=bool))


def test_parse_unknown_kind(tmp_path):
    f = tmp_path / "ann.jsonl"
    f.write_text(
        '{"video_id":"v1","class":0,"entries":[{"frame":0,"kind":"blob","data":[1]}]}\n'
    )
    with pytest.raises(FormatError, match="unknown annotation kind"):
        parse_annotations(f)


def test_parse_duplicate_entry(tmp_path):
    f = tmp_path / "ann.jsonl"
    f.write_text(
        '{"video_id":"v1","class":0,"entries":['
        '{"frame":0,"kind":"point","data":[1,1]},'
        '{"frame":0,"kind":"point","data":[2,2]}]}\n'
    )
    with pytest.raises(ValidationError, match="duplicate"):
        parse_annotations(f)


def test_parse_out_of_bounds_coordinate(tmp_path):
    f = tmp_path / "ann.jsonl"
    f.write_text(
        '{"video_id":"v1","class":0,"entries":[{"frame":0,"kind":"point","data":[99,1]}]}\n'
    )
    with pytest.raises(ValidationError, match="v1"):
        parse_annotations(f, frame_shape=(8, 8))


def _random_record(rng, vid):
    entries = []
    frames = rng.choice(20, size=rng.integers(0, 4), replace=False)
    for fr in frames:
        kind = rng.choice(["point", "scribble", "box", "mask"])
        if kind == "point":
            payload = (int(rng.integers(0, 16)), int(rng.integers(0, 16)))
            entries.append(AnnotationEntry(int(fr), AnnotationKind.POINT, payload))
        elif kind == "scribble":
            pts = tuple(
                (int(rng.integers(0, 16)), int(rng.integers(0, 16)))
                for _ in range(int(rng.integers(1, 6)))
            )
            entries.append(AnnotationEntry(int(fr), AnnotationKind.SCRIBBLE, pts))
        elif kind == "box":
            x0, x1 = sorted(int(v) for v in rng.integers(0, 16, 2))
            y0, y1 = sorted(int(v) for v in rng.integers(0, 16, 2))
            entries.append(AnnotationEntry(int(fr), AnnotationKind.BOX, (x0, y0, x1, y1)))
        else:
            m = rng.random((16, 16)) < 0.3
            entries.append(AnnotationEntry(int(fr), AnnotationKind.MASK, m))
    return AnnotationRecord(vid, int(rng.integers(0, 10)), tuple(entries))


def test_annotation_round_trip_random(tmp_path):
    rng = np.random.default_rng(23)
    records = [_random_record(rng, f"v{i}") for i in range(20)]
    f = tmp_path / "ann.jsonl"
    write_annotations(records, f)
    back = parse_annotations(f, frame_shape=(16, 16))
    assert len(back) == len(records)
    for a, b in zip(records, back):
        assert a.video_id == b.video_id and a.class_tag == b.class_tag
        assert len(a.entries) == len(b.entries)
        for ea, eb in zip(a.entries, b.entries):
            assert ea.frame == eb.frame and ea.kind == eb.kind
            if ea.kind is AnnotationKind.MASK:
                assert np.array_equal(ea.payload, eb.payload)
            else:
                assert ea.payload == eb.payload
    assert serialize_annotations(back) == serialize_annotations(records)


def test_record_invariants():
    with pytest.raises(ValidationError):
        AnnotationEntry(0, AnnotationKind.BOX, (5, 0, 2, 3))  # xmin > xmax
    with pytest.raises(ValidationError):
        AnnotationEntry(-1, AnnotationKind.POINT, (0, 0))
    rec = AnnotationRecord("v", 1, (AnnotationEntry(2, AnnotationKind.POINT, (3, 4)),))
    with pytest.raises(ValidationError):
        rec.validate_bounds(2, 8, 8)  # frame 2 outside [0, 2)
    rec.validate_bounds(3, 8, 8)


# --- label volumes and uncertainty containers --------------------------------

def _random_superpixels(rng, t=4, h=8, w=8, k=5):
    labels = rng.integers(0, k, size=(t, h, w)).astype(np.int32)
    for j in range(k):  # guarantee every label appears
        labels.ravel()[j] = j
    return SuperpixelLabels(
        "v", labels, rng.random((k, 3)) * 10, rng.random((k, 9)) * 100
    )


def test_labels_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    for i in range(10):
        sp = _random_superpixels(rng)
        f = tmp_path / f"l{i}.spv"
        write_labels(sp, f)
        back = read_labels(f, video_id="v")
        assert np.array_equal(back.labels, sp.labels)
        assert np.allclose(back.centroid_positions, sp.centroid_positions, atol=1e-6)
        assert np.allclose(back.centroid_features, sp.centroid_features, atol=1e-4)


def test_labels_minimal_file_size(tmp_path):
    sp = SuperpixelLabels(
        "v", np.zeros((1, 1, 1), dtype=np.int32), np.zeros((1, 3)), np.zeros((1, 9))
    )
    f = tmp_path / "one.spv"
    write_labels(sp, f)
    assert f.stat().st_size == 20 + 4 + 48  # header, one label, one cluster record


def test_labels_truncated(tmp_path):
    sp = _random_superpixels(np.random.default_rng(1))
    f = tmp_path / "l.spv"
    write_labels(sp, f)
    data = f.read_bytes()
    f.write_bytes(data[: len(data) // 2])
    with pytest.raises(FormatError):
        read_labels(f)


def test_labels_bad_magic(tmp_path):
    f = tmp_path / "l.spv"
    f.write_bytes(b"NOPE" + b"\0" * 32)
    with pytest.raises(FormatError, match="magic"):
        read_labels(f)


def test_uncertainty_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    values = rng.random((3, 6, 5)).astype(np.float32).astype(np.float64)
    f = tmp_path / "u.unc"
    write_uncertainty(values, f)
    assert np.allclose(read_uncertainty(f), values, atol=1e-7)
    with pytest.raises(ValidationError):
        write_uncertainty(-values - 1.0, tmp_path / "bad.unc")


# --- splits and cost table ---------------------------------------------------

def test_split_round_trip(tmp_path):
    split = DatasetSplit(frozenset({"a", "b"}), frozenset({"c"}), 2)
    f = tmp_path / "split.json"
    write_split(split, f)
    assert read_split(f) == split


def test_split_overlap_rejected():
    with pytest.raises(ValidationError):
        DatasetSplit(frozenset({"a"}), frozenset({"a", "b"}))


def test_cost_table_defaults_ordered():
    ct = CostTable()
    assert ct.mask_s >= ct.box_s >= ct.scribble_s >= ct.point_s >= ct.tag_s


def test_cost_table_override_warns_not_raises():
    with pytest.warns(UserWarning):
        ct = CostTable(tag_s=50.0)
    assert ct.tag_s == 50.0
    with pytest.raises(ValidationError):
        CostTable(box_s=-1.0)


def test_volume_invariants():
    with pytest.raises(ValidationError):
        VideoVolume("v", np.full((1, 1, 1, 3), 200.0))  # L out of range
    ok = VideoVolume("v", np.zeros((2, 2, 2, 3)))
    assert ok.depth == 2 and ok.height == 2 and ok.width == 2
