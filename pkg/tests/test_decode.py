import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distwatch.decode import (
    AnchorSet,
    DecodeConfig,
    Detection,
    LayerSpec,
    RawLayerOutput,
    decode_frame,
    decode_layer,
    iou,
    nms,
    parse_anchor_file,
    read_tensor_file,
    sigmoid,
    write_anchor_file,
    write_tensor_file,
)
from distwatch.classes import VISDRONE
from distwatch.errors import FormatError
from distwatch.preprocess import LetterboxTransform

from oracles import brute_force_nms, single_iou

BIG = 1e6


def layer_tensor(grid, na=1, nc=1, fill=0.0):
    return np.full((na, grid, grid, 5 + nc), fill)


def single_cell_layer(stride, cx, cy, target, anchors=((10.0, 13.0),)):
    """One hot cell: obj and class 0 logits huge, box logits zero."""
    grid = target // stride
    values = np.full((1, grid, grid, 6), -BIG)
    values[0, cy, cx, :4] = 0.0
    values[0, cy, cx, 4] = BIG
    values[0, cy, cx, 5] = BIG
    return RawLayerOutput(0, grid, grid, 1, 6, values)


class TestSigmoid:
    def test_zero(self):
        assert sigmoid(0.0) == 0.5

    def test_large_negative(self):
        assert sigmoid(-BIG) == pytest.approx(0.0, abs=1e-12)

    def test_closed_form(self):
        assert sigmoid(math.log(3)) == pytest.approx(0.75)

    @given(st.floats(-50, 50))
    def test_monotone_and_bounded(self, x):
        assert 0.0 <= sigmoid(x) <= 1.0
        assert sigmoid(x) <= sigmoid(x + 1.0)


class TestDecodeLayer:
    def test_all_suppressed(self):
        raw = RawLayerOutput(0, 1, 1, 1, 6, np.full((1, 1, 1, 6), -BIG))
        anchors = AnchorSet((LayerSpec(8, ((10, 13),)),
                             LayerSpec(16, ((30, 61),)),
                             LayerSpec(32, ((116, 90),))))
        cfg = DecodeConfig(target_size=8)
        assert decode_layer(raw, anchors, cfg) == []

    def test_single_cell_origin(self):
        # sigma(0)=0.5 -> center ((2*0.5-0.5)+0)*8 = 4, size (2*0.5)^2*a = a
        raw = single_cell_layer(8, 0, 0, target=8)
        anchors = AnchorSet((LayerSpec(8, ((10.0, 13.0),)),
                             LayerSpec(16, ((30, 61),)),
                             LayerSpec(32, ((116, 90),))))
        dets = decode_layer(raw, anchors, DecodeConfig(target_size=8))
        assert len(dets) == 1
        d = dets[0]
        assert ((d.x1 + d.x2) / 2, (d.y1 + d.y2) / 2) == pytest.approx((4.0, 4.0))
        assert (d.x2 - d.x1, d.y2 - d.y1) == pytest.approx((10.0, 13.0))
        assert d.confidence == pytest.approx(1.0)

    def test_single_cell_offset_stride16(self):
        raw = single_cell_layer(16, 2, 1, target=48)
        raw = RawLayerOutput(1, raw.grid_h, raw.grid_w, 1, 6, raw.values)
        anchors = AnchorSet((LayerSpec(8, ((10, 13),)),
                             LayerSpec(16, ((10.0, 13.0),)),
                             LayerSpec(32, ((116, 90),))))
        dets = decode_layer(raw, anchors, DecodeConfig(target_size=48))
        assert len(dets) == 1
        d = dets[0]
        assert ((d.x1 + d.x2) / 2, (d.y1 + d.y2) / 2) == pytest.approx((40.0, 24.0))

    def test_grid_stride_mismatch(self):
        raw = RawLayerOutput(0, 2, 2, 1, 6, np.zeros((1, 2, 2, 6)))
        anchors = AnchorSet((LayerSpec(8, ((10, 13),)),
                             LayerSpec(16, ((30, 61),)),
                             LayerSpec(32, ((116, 90),))))
        with pytest.raises(FormatError):
            decode_layer(raw, anchors, DecodeConfig(target_size=640))

    def test_grid_sizes_for_640(self):
        # strides 8/16/32/64 -> grids 80/40/20/10
        for stride, grid in ((8, 80), (16, 40), (32, 20), (64, 10)):
            assert 640 // stride == grid

    def test_threshold_monotone(self):
        rng = np.random.default_rng(3)
        values = rng.normal(0, 2, (2, 4, 4, 8))
        raw = RawLayerOutput(0, 4, 4, 2, 8, values)
        anchors = AnchorSet((LayerSpec(8, ((10, 13), (16, 30))),
                             LayerSpec(16, ((30, 61), (62, 45))),
                             LayerSpec(32, ((116, 90), (156, 198)))))
        counts = [
            len(decode_layer(raw, anchors, DecodeConfig(confidence_threshold=t, target_size=32)))
            for t in (0.05, 0.25, 0.5, 0.9)
        ]
        assert counts == sorted(counts, reverse=True)


class TestIou:
    def test_identical(self):
        assert iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0

    def test_disjoint(self):
        assert iou((0, 0, 10, 10), (20, 20, 30, 30)) == 0.0

    def test_partial_overlap(self):
        assert iou((0, 0, 10, 10), (5, 5, 15, 15)) == pytest.approx(25 / 175)

    def test_degenerate_union(self):
        assert iou((5, 5, 5, 5), (5, 5, 5, 5)) == 0.0

    @given(
        st.tuples(*(st.floats(0, 100) for _ in range(4))),
        st.tuples(*(st.floats(0, 100) for _ in range(4))),
    )
    @settings(max_examples=200)
    def test_symmetric_and_bounded(self, raw_a, raw_b):
        a = (min(raw_a[0], raw_a[2]), min(raw_a[1], raw_a[3]),
             max(raw_a[0], raw_a[2]), max(raw_a[1], raw_a[3]))
        b = (min(raw_b[0], raw_b[2]), min(raw_b[1], raw_b[3]),
             max(raw_b[0], raw_b[2]), max(raw_b[1], raw_b[3]))
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0
        assert iou(a, b) == pytest.approx(single_iou(a, b))


def random_detections(rng, n, n_classes=3):
    dets = []
    for _ in range(n):
        x1, y1 = rng.uniform(0, 80, 2)
        w, h = rng.uniform(1, 40, 2)
        dets.append(
            Detection(
                int(rng.integers(0, n_classes)),
                float(rng.uniform(0.01, 1.0)),
                float(x1), float(y1), float(x1 + w), float(y1 + h),
            )
        )
    return dets


class TestNms:
    def test_overlapping_same_class(self):
        a = Detection(0, 0.9, 0, 0, 10, 10)
        b = Detection(0, 0.8, 0, 0, 10, 6)  # IoU 0.6 with a
        assert iou(a.box, b.box) == pytest.approx(0.6)
        assert nms([b, a], DecodeConfig()) == [a]

    def test_disjoint_kept(self):
        a = Detection(0, 0.9, 0, 0, 10, 10)
        b = Detection(0, 0.8, 50, 50, 60, 60)
        assert nms([a, b], DecodeConfig()) == [a, b]

    def test_class_aware(self):
        a = Detection(0, 0.9, 0, 0, 10, 10)
        b = Detection(1, 0.8, 0, 0, 10, 9)
        assert iou(a.box, b.box) == 0.9
        assert nms([a, b], DecodeConfig()) == [a, b]

    def test_max_detections(self):
        dets = [Detection(0, 0.5, i * 100, 0, i * 100 + 10, 10) for i in range(20)]
        cfg = DecodeConfig(max_detections=5)
        assert len(nms(dets, cfg)) == 5

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        cfg = DecodeConfig()
        for _ in range(200):
            dets = random_detections(rng, int(rng.integers(0, 50)))
            assert nms(dets, cfg) == brute_force_nms(dets, cfg.nms_iou_threshold)


class TestDecodeFrame:
    def make_anchors(self):
        return AnchorSet((LayerSpec(8, ((10.0, 13.0),)),))

    def test_all_suppressed(self):
        anchors = AnchorSet((LayerSpec(8, ((10, 13),)),
                             LayerSpec(16, ((30, 61),)),
                             LayerSpec(32, ((116, 90),))))
        cfg = DecodeConfig(target_size=32)
        layers = [
            RawLayerOutput(i, 32 // s, 32 // s, 1, 6, np.full((1, 32 // s, 32 // s, 6), -BIG))
            for i, s in enumerate((8, 16, 32))
        ]
        t = LetterboxTransform(1.0, 0, 0, 32)
        assert decode_frame(layers, anchors, cfg, t, 32, 32) == []

    def test_single_cell_with_identity_transform(self):
        anchors = AnchorSet((LayerSpec(8, ((10.0, 13.0),)),
                             LayerSpec(16, ((30, 61),)),
                             LayerSpec(32, ((116, 90),))))
        cfg = DecodeConfig(target_size=32)
        layers = [single_cell_layer(8, 0, 0, target=32)]
        for i, s in ((1, 16), (2, 32)):
            g = 32 // s
            layers.append(RawLayerOutput(i, g, g, 1, 6, np.full((1, g, g, 6), -BIG)))
        t = LetterboxTransform(1.0, 0, 0, 32)
        dets = decode_frame(layers, anchors, cfg, t, 32, 32)
        assert len(dets) == 1
        d = dets[0]
        # corners center +/- size/2, then clipped to the image at 0
        assert (d.x1, d.y1) == (max(0.0, 4 - 5), max(0.0, 4 - 6.5))
        assert (d.x2, d.y2) == pytest.approx((9.0, 10.5))

    def test_duplicate_across_layers_suppressed(self):
        anchors = AnchorSet((LayerSpec(8, ((10.0, 13.0),)),
                             LayerSpec(16, ((10.0, 13.0),)),
                             LayerSpec(32, ((116, 90),))))
        cfg = DecodeConfig(target_size=32)
        # stride 8 cell (1,1) center = 12; stride 16 cell (0,0) would be 8 --
        # instead use logits that land both at the same box via anchors.
        l0 = single_cell_layer(8, 1, 1, target=32)
        g1 = 2
        v1 = np.full((1, g1, g1, 6), -BIG)
        # cell (0,0) at stride 16: need center 12 -> (2*sig(t)-0.5)*16 = 12
        # sig(t) = 0.625 -> t = ln(0.625/0.375)
        tv = math.log(0.625 / 0.375)
        v1[0, 0, 0, :4] = (tv, tv, 0.0, 0.0)
        v1[0, 0, 0, 4] = BIG
        v1[0, 0, 0, 5] = BIG
        l1 = RawLayerOutput(1, g1, g1, 1, 6, v1)
        g2 = 1
        l2 = RawLayerOutput(2, g2, g2, 1, 6, np.full((1, g2, g2, 6), -BIG))
        t = LetterboxTransform(1.0, 0, 0, 32)
        dets = decode_frame([l0, l1, l2], anchors, cfg, t, 32, 32)
        assert len(dets) == 1  # IoU 1.0 duplicates collapse to one survivor

    def test_missing_layer(self):
        anchors = AnchorSet((LayerSpec(8, ((10, 13),)),
                             LayerSpec(16, ((30, 61),)),
                             LayerSpec(32, ((116, 90),))))
        cfg = DecodeConfig(target_size=32)
        layers = [single_cell_layer(8, 0, 0, target=32)]
        t = LetterboxTransform(1.0, 0, 0, 32)
        with pytest.raises(FormatError):
            decode_frame(layers, anchors, cfg, t, 32, 32)

    def test_outputs_within_image(self):
        rng = np.random.default_rng(11)
        anchors = AnchorSet((LayerSpec(8, ((10, 13), (33, 23))),
                             LayerSpec(16, ((30, 61),)),
                             LayerSpec(32, ((116, 90),))))
        cfg = DecodeConfig(confidence_threshold=0.05, target_size=64)
        layers = []
        for i, (s, na) in enumerate(((8, 2), (16, 1), (32, 1))):
            g = 64 // s
            layers.append(RawLayerOutput(i, g, g, na, 6, rng.normal(0, 3, (na, g, g, 6))))
        t = LetterboxTransform(0.5, 0, 7, 64)
        for d in decode_frame(layers, anchors, cfg, t, 128, 100):
            assert 0 <= d.x1 <= d.x2 <= 128
            assert 0 <= d.y1 <= d.y2 <= 100


class TestTensorAndAnchorFiles:
    def test_tensor_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        layers = [
            RawLayerOutput(i, 64 // s, 64 // s, 2, 7,
                           rng.normal(0, 1, (2, 64 // s, 64 // s, 7)).astype(np.float32).astype(np.float64))
            for i, s in enumerate((8, 16, 32))
        ]
        path = tmp_path / "t.tens"
        write_tensor_file(path, layers, (8, 16, 32))
        back = read_tensor_file(path)
        assert len(back) == 3
        for a, b in zip(layers, back):
            assert np.allclose(a.values, b.values, atol=1e-7)

    def test_anchor_file_round_trip(self, tmp_path):
        anchors = AnchorSet((LayerSpec(8, ((10, 13), (16, 30), (33, 23))),
                             LayerSpec(16, ((30, 61), (62, 45), (59, 119))),
                             LayerSpec(32, ((116, 90), (156, 198), (373, 326)))))
        path = tmp_path / "anchors.txt"
        write_anchor_file(path, anchors, VISDRONE)
        back, registry = parse_anchor_file(path)
        assert back == anchors
        assert registry.classes == VISDRONE.classes
        assert registry.person_like == {0, 1}

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.tens"
        path.write_bytes(b"NOPE 3\n")
        with pytest.raises(FormatError):
            read_tensor_file(path)


def test_anchor_set_invariants():
    with pytest.raises(ValueError):
        AnchorSet((LayerSpec(8, ((10, 13),)), LayerSpec(8, ((30, 61),)),
                   LayerSpec(32, ((116, 90),))))
    with pytest.raises(ValueError):
        AnchorSet((LayerSpec(8, ((10, 13),)),))
    with pytest.raises(ValueError):
        LayerSpec(8, ((0, 13),))
