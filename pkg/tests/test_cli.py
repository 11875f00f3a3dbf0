import numpy as np
import pytest

from distwatch.backend import DetectionFileRecord, read_detection_file, write_detection_file
from distwatch.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_VIOLATIONS, main
from distwatch.decode import (
    AnchorSet,
    LayerSpec,
    RawLayerOutput,
    write_anchor_file,
    write_tensor_file,
)
from distwatch.preprocess import Frame, write_raw_stream

from conftest import person

BIG = 1e6


@pytest.fixture
def frame_stream(tmp_path):
    """Two 400x400 frames as a raw stream file."""
    frames = [
        Frame(i, 400, 400, np.zeros((400, 400, 3), dtype=np.uint8)) for i in range(2)
    ]
    path = tmp_path / "frames.raw"
    write_raw_stream(path, frames)
    return path


@pytest.fixture
def detection_fixture(tmp_path):
    """Frame 0 has a violating pair, frame 1 is safe."""
    records = [
        DetectionFileRecord(0, (person(90, 80, 110, 120), person(190, 80, 210, 120))),
        DetectionFileRecord(1, (person(0, 0, 20, 40), person(380, 0, 400, 40))),
    ]
    path = tmp_path / "dets.txt"
    write_detection_file(path, records)
    return path


def tensor_fixture_dir(tmp_path, target=640):
    """One frame's worth of tensors: a single hot cell at stride 8."""
    d = tmp_path / "tensors"
    d.mkdir()
    layers = []
    for i, s in enumerate((8, 16, 32)):
        g = target // s
        values = np.full((1, g, g, 6), -BIG)
        if i == 0:
            values[0, 10, 10, :4] = 0.0
            values[0, 10, 10, 4] = BIG
            values[0, 10, 10, 5] = BIG
        layers.append(RawLayerOutput(i, g, g, 1, 6, values))
    write_tensor_file(d / "f0.tens", layers, (8, 16, 32))
    anchors = AnchorSet((LayerSpec(8, ((10.0, 13.0),)),
                         LayerSpec(16, ((30.0, 61.0),)),
                         LayerSpec(32, ((116.0, 90.0),))))
    anchor_path = tmp_path / "anchors.txt"
    write_anchor_file(anchor_path, anchors)
    return d, anchor_path


class TestDetect:
    def test_raw_tensor_fixture(self, tmp_path):
        tensors, anchors = tensor_fixture_dir(tmp_path)
        frames = tmp_path / "frames.raw"
        write_raw_stream(frames, [Frame(0, 640, 640, np.zeros((640, 640, 3), np.uint8))])
        out = tmp_path / "dets.txt"
        code = main(["detect", "--tensors", str(tensors), "--anchors", str(anchors),
                     "--frames", str(frames), "--out", str(out)])
        assert code == EXIT_OK
        records = read_detection_file(out)
        assert len(records) == 1 and len(records[0].detections) == 1

    def test_empty_frame_source(self, tmp_path):
        tensors, anchors = tensor_fixture_dir(tmp_path)
        empty = tmp_path / "empty"
        empty.mkdir()
        out = tmp_path / "dets.txt"
        code = main(["detect", "--tensors", str(tensors), "--anchors", str(anchors),
                     "--frames", str(empty), "--out", str(out)])
        assert code == EXIT_OK
        assert read_detection_file(out) == []

    def test_missing_anchor_file_is_config_error(self, tmp_path, capsys):
        tensors, _ = tensor_fixture_dir(tmp_path)
        code = main(["detect", "--tensors", str(tensors),
                     "--frames", str(tmp_path), "--out", str(tmp_path / "o.txt")])
        assert code == EXIT_CONFIG
        assert "--anchors" in capsys.readouterr().err

    def test_detection_backend_rejected(self, tmp_path, detection_fixture):
        code = main(["detect", "--detections", str(detection_fixture),
                     "--frames", str(tmp_path), "--out", str(tmp_path / "o.txt")])
        assert code == EXIT_CONFIG


class TestMonitor:
    def test_exit_on_violation(self, frame_stream, detection_fixture, capsys):
        code = main(["monitor", "--detections", str(detection_fixture),
                     "--frames", str(frame_stream), "--exit-on-violation"])
        assert code == EXIT_VIOLATIONS

    def test_without_flag_exit_ok(self, frame_stream, detection_fixture, capsys):
        code = main(["monitor", "--detections", str(detection_fixture),
                     "--frames", str(frame_stream)])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "violations=1" in out.splitlines()[-1]

    def test_zero_frames(self, tmp_path, detection_fixture, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main(["monitor", "--detections", str(detection_fixture),
                     "--frames", str(empty)])
        assert code == EXIT_OK
        assert "frames=0" in capsys.readouterr().out

    def test_report_and_annotations_written(self, frame_stream, detection_fixture, tmp_path):
        out = tmp_path / "out"
        code = main(["monitor", "--detections", str(detection_fixture),
                     "--frames", str(frame_stream), "--out", str(out), "--annotate"])
        assert code == EXIT_OK
        assert (out / "report.txt").exists()
        assert (out / "frame_0.ppm").exists() and (out / "frame_1.ppm").exists()

    def test_threshold_flags(self, frame_stream, detection_fixture, capsys):
        # violation threshold below the 100 px pair distance: nothing violates
        code = main(["monitor", "--detections", str(detection_fixture),
                     "--frames", str(frame_stream), "--violation-below", "50",
                     "--exit-on-violation"])
        assert code == EXIT_OK


class TestEval:
    def make_gt(self, tmp_path):
        gt_dir = tmp_path / "annotations"
        gt_dir.mkdir()
        (gt_dir / "img1.txt").write_text("0,0,20,40,1,1,0,0\n100,100,30,30,1,4,0,0\n")
        return gt_dir

    def test_perfect_fixture(self, tmp_path, capsys):
        gt_dir = self.make_gt(tmp_path)
        dets = tmp_path / "dets.txt"
        write_detection_file(dets, [DetectionFileRecord(0, (
            person(0, 0, 20, 40, conf=1.0, class_id=0),
            person(100, 100, 130, 130, conf=1.0, class_id=3),
        ))])
        code = main(["eval", "--detections", str(dets), "--ground-truth", str(gt_dir),
                     "--classes", "visdrone", "--model-name", "m"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "m 640 All 100.0 100.0 100.0 100.0" in out

    def test_malformed_annotation_line(self, tmp_path, capsys):
        gt_dir = tmp_path / "annotations"
        gt_dir.mkdir()
        (gt_dir / "img1.txt").write_text("1,2,3\n")
        dets = tmp_path / "dets.txt"
        write_detection_file(dets, [DetectionFileRecord(0, ())])
        code = main(["eval", "--detections", str(dets), "--ground-truth", str(gt_dir),
                     "--classes", "visdrone"])
        assert code == EXIT_DATA
        assert ":1" in capsys.readouterr().err

    def test_missing_ground_truth_flag(self, tmp_path, detection_fixture):
        code = main(["eval", "--detections", str(detection_fixture)])
        assert code == EXIT_CONFIG


class TestBench:
    def test_zero_persons(self, capsys):
        code = main(["bench", "--bench-frames", "50", "--persons-per-frame", "0"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "pairs_per_frame=0" in out

    def test_pair_count(self, capsys):
        code = main(["bench", "--bench-frames", "10", "--persons-per-frame", "50"])
        assert code == EXIT_OK
        assert "pairs_per_frame=1225" in capsys.readouterr().out

    def test_negative_persons(self):
        assert main(["bench", "--persons-per-frame", "-1"]) == EXIT_CONFIG


class TestParser:
    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["monitor", "--no-such-flag"])
        assert exc.value.code == 2

    def test_help_lists_flags(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["monitor", "--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for flag in ("--backend", "--detections", "--anchors", "--classes",
                     "--frames", "--out", "--conf", "--nms-iou", "--high-below",
                     "--medium-upper", "--violation-below", "--calibration",
                     "--annotate", "--exit-on-violation"):
            assert flag in out
