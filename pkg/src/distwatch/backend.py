"""Pluggable per-frame detection sources.

Three kinds: a portable inference graph (TorchScript, as emitted by the
exporter), a directory of raw tensor files, or a pre-computed detection
file. The detection file is the canonical test/benchmark path; it keeps
the rest of the engine independent of any trained model.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import decode as dec
from .decode import AnchorSet, DecodeConfig, Detection
from .errors import ConfigError, FormatError, NoDetectionsRecordedError
from .preprocess import Frame, letterbox


class BackendKind(enum.Enum):
    MODEL = "model"
    RAW_TENSOR_FILE = "raw-tensor-file"
    DETECTION_FILE = "detection-file"


@dataclass(frozen=True)
class DetectionFileRecord:
    frame_index: int
    detections: tuple[Detection, ...]


# --- detection file format ----------------------------------------------
#   frame=<n> dets=<k>
#   <class_id> <conf> <x1> <y1> <x2> <y2>     (k lines, decimal text)

def write_detection_file(path: str | Path, records: Sequence[DetectionFileRecord]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(f"frame={rec.frame_index} dets={len(rec.detections)}\n")
            for d in rec.detections:
                fh.write(f"{d.class_id} {d.confidence!r} {d.x1!r} {d.y1!r} {d.x2!r} {d.y2!r}\n")


def read_detection_file(path: str | Path) -> list[DetectionFileRecord]:
    records: list[DetectionFileRecord] = []
    seen: set[int] = set()
    with open(path) as fh:
        lines = fh.read().splitlines()
    pos = 0
    while pos < len(lines):
        line = lines[pos].strip()
        pos += 1
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or not parts[0].startswith("frame=") or not parts[1].startswith("dets="):
            raise FormatError(f"{path}:{pos}: expected 'frame=<n> dets=<k>' header")
        frame_index = int(parts[0].split("=", 1)[1])
        count = int(parts[1].split("=", 1)[1])
        if frame_index in seen:
            raise FormatError(f"{path}:{pos}: duplicate frame {frame_index}")
        if records and frame_index < records[-1].frame_index:
            raise FormatError(f"{path}:{pos}: frame indices must be sorted")
        seen.add(frame_index)
        dets = []
        for _ in range(count):
            if pos >= len(lines):
                raise FormatError(f"{path}: truncated record for frame {frame_index}")
            fields = lines[pos].split()
            pos += 1
            if len(fields) != 6:
                raise FormatError(f"{path}:{pos}: expected 6 detection fields")
            try:
                dets.append(
                    Detection(
                        int(fields[0]),
                        float(fields[1]),
                        float(fields[2]),
                        float(fields[3]),
                        float(fields[4]),
                        float(fields[5]),
                    )
                )
            except ValueError as exc:
                raise FormatError(f"{path}:{pos}: {exc}")
        records.append(DetectionFileRecord(frame_index, tuple(dets)))
    return records


class DetectionFileBackend:
    """Read-only, concurrently shareable passthrough of stored detections."""

    kind = BackendKind.DETECTION_FILE

    def __init__(self, records: Sequence[DetectionFileRecord]):
        self._by_frame = {r.frame_index: list(r.detections) for r in records}

    @classmethod
    def from_file(cls, path: str | Path) -> "DetectionFileBackend":
        return cls(read_detection_file(path))

    @property
    def available_frames(self) -> int:
        return len(self._by_frame)

    def detections_for(self, frame: Frame) -> list[Detection]:
        try:
            return self._by_frame[frame.frame_index]
        except KeyError:
            raise NoDetectionsRecordedError(
                f"no detections recorded for frame {frame.frame_index}"
            )


class RawTensorBackend:
    """Decodes raw tensor files (one per frame, lexicographic order)."""

    kind = BackendKind.RAW_TENSOR_FILE

    def __init__(self, directory: str | Path, cfg: DecodeConfig, anchors: AnchorSet):
        self.cfg = cfg
        self.anchors = anchors
        directory = Path(directory)
        self._files = sorted(
            directory / name
            for name in os.listdir(directory)
            if (directory / name).is_file()
        )
        for path in self._files:
            n = dec.read_tensor_header(path)
            if n != len(anchors.layers):
                raise FormatError(
                    f"{path}: {n} layers in tensor file, {len(anchors.layers)} "
                    f"in anchor set"
                )

    @property
    def available_frames(self) -> int:
        return len(self._files)

    def detections_for(self, frame: Frame) -> list[Detection]:
        if frame.frame_index >= len(self._files):
            raise NoDetectionsRecordedError(
                f"no tensor file for frame {frame.frame_index}"
            )
        layers = dec.read_tensor_file(self._files[frame.frame_index])
        _, transform = letterbox(frame, self.cfg.target_size)
        return dec.decode_frame(
            layers, self.anchors, self.cfg, transform, frame.width, frame.height
        )


class ModelBackend:
    """Runs an exported TorchScript graph. Serialized: one inference in flight."""

    kind = BackendKind.MODEL

    def __init__(self, path: str | Path, cfg: DecodeConfig, anchors: AnchorSet):
        import torch  # deferred: only the model kind needs it

        self._torch = torch
        self.cfg = cfg
        self.anchors = anchors
        self.module = torch.jit.load(str(path), map_location="cpu")
        self.module.eval()
        self._validate()

    def _validate(self):
        torch = self._torch
        t = self.cfg.target_size
        with torch.no_grad():
            outputs = self.module(torch.zeros(1, 3, t, t))
        if not isinstance(outputs, (list, tuple)):
            outputs = [outputs]
        if len(outputs) != len(self.anchors.layers):
            raise FormatError(
                f"model has {len(outputs)} output layers, anchor set has "
                f"{len(self.anchors.layers)}"
            )
        for i, (out, spec) in enumerate(zip(outputs, self.anchors.layers)):
            g = t // spec.stride
            na = len(spec.anchors)
            if tuple(out.shape[:4]) != (1, na, g, g):
                raise FormatError(
                    f"model output {i} shape {tuple(out.shape)} does not match "
                    f"anchors/stride (expected (1, {na}, {g}, {g}, C))"
                )

    def detections_for(self, frame: Frame) -> list[Detection]:
        torch = self._torch
        raster, transform = letterbox(frame, self.cfg.target_size)
        x = torch.from_numpy(
            np.ascontiguousarray(raster.transpose(2, 0, 1), dtype=np.float32) / 255.0
        ).unsqueeze(0)
        with torch.no_grad():
            outputs = self.module(x)
        if not isinstance(outputs, (list, tuple)):
            outputs = [outputs]
        layers = []
        for i, out in enumerate(outputs):
            arr = out.squeeze(0).numpy().astype(np.float64)
            na, gh, gw, ch = arr.shape
            layers.append(dec.RawLayerOutput(i, gh, gw, na, ch, arr))
        return dec.decode_frame(
            layers, self.anchors, self.cfg, transform, frame.width, frame.height
        )


def open_backend(
    kind: BackendKind | str,
    path: str | Path,
    cfg: DecodeConfig,
    anchors: Optional[AnchorSet] = None,
):
    """Open a backend handle; tensor-producing kinds require anchors."""
    kind = BackendKind(kind)
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"backend path {path} does not exist")
    if kind is BackendKind.DETECTION_FILE:
        return DetectionFileBackend.from_file(path)
    if anchors is None:
        raise ConfigError(f"{kind.value} backend requires an anchor set")
    if kind is BackendKind.RAW_TENSOR_FILE:
        return RawTensorBackend(path, cfg, anchors)
    return ModelBackend(path, cfg, anchors)
