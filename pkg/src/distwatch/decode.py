"""Detection-head decoding: logits -> thresholded, NMS-filtered detections.

Decode follows the usual YOLO parameterization per anchor/cell:

    bx = ((2*sigmoid(tx) - 0.5) + cx) * stride
    bw = (2*sigmoid(tw))**2 * anchor_w
    score = sigmoid(obj) * sigmoid(cls)

Boxes are produced in letterboxed coordinates and mapped back to the
original image after NMS.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .classes import ClassRegistry, COCO, registry_from_names
from .errors import FormatError
from .preprocess import DEFAULT_TARGET_SIZE, LetterboxTransform, unmap_box

Box = tuple[float, float, float, float]

VALID_STRIDES = (8, 16, 32, 64)


@dataclass(frozen=True)
class LayerSpec:
    stride: int
    anchors: tuple[tuple[float, float], ...]  # (w, h) pairs at input scale

    def __post_init__(self):
        if self.stride not in VALID_STRIDES:
            raise ValueError(f"stride {self.stride} not in {VALID_STRIDES}")
        if not self.anchors or any(w <= 0 or h <= 0 for w, h in self.anchors):
            raise ValueError("anchor pairs must be positive")


@dataclass(frozen=True)
class AnchorSet:
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if len(self.layers) not in (3, 4):
            raise ValueError("expected 3 (small model) or 4 (P6 model) output layers")
        strides = [l.stride for l in self.layers]
        if strides != sorted(strides) or len(set(strides)) != len(strides):
            raise ValueError("strides must be strictly increasing across layers")

    def __len__(self) -> int:
        return len(self.layers)


@dataclass(frozen=True, eq=False)
class RawLayerOutput:
    """One head's logit tensor, layout [anchor][grid_y][grid_x][channel]."""

    layer_index: int
    grid_h: int
    grid_w: int
    num_anchors: int
    channels: int  # 5 + num_classes: tx, ty, tw, th, obj, cls...
    values: np.ndarray

    def __post_init__(self):
        expected = (self.num_anchors, self.grid_h, self.grid_w, self.channels)
        if self.values.shape != expected:
            raise FormatError(
                f"layer {self.layer_index}: tensor shape {self.values.shape} "
                f"!= declared {expected}"
            )
        if self.channels < 6:
            raise FormatError("channels must be >= 6 (box + objectness + 1 class)")

    @property
    def num_classes(self) -> int:
        return self.channels - 5


@dataclass(frozen=True)
class Detection:
    class_id: int
    confidence: float
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError("box corners out of order")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")

    @property
    def box(self) -> Box:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class DecodeConfig:
    confidence_threshold: float = 0.25
    nms_iou_threshold: float = 0.45
    registry: ClassRegistry = COCO
    max_detections: int = 300
    target_size: int = DEFAULT_TARGET_SIZE

    def __post_init__(self):
        if not 0.0 < self.confidence_threshold < 1.0:
            raise ValueError("confidence_threshold must be in (0, 1)")
        if not 0.0 < self.nms_iou_threshold < 1.0:
            raise ValueError("nms_iou_threshold must be in (0, 1)")


def sigmoid(x):
    """Numerically safe logistic; accepts scalars or arrays."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out) if out.ndim == 0 else out


def decode_layer(
    raw: RawLayerOutput,
    anchors: AnchorSet,
    cfg: DecodeConfig,
) -> list[Detection]:
    """All (anchor, cell, class) candidates scoring >= the confidence threshold.

    Boxes are corner-form in letterboxed coordinates.
    """
    spec = anchors.layers[raw.layer_index]
    expected = cfg.target_size // spec.stride
    if cfg.target_size % spec.stride != 0 or (raw.grid_h, raw.grid_w) != (expected, expected):
        raise FormatError(
            f"layer {raw.layer_index}: grid {raw.grid_h}x{raw.grid_w} does not "
            f"match target {cfg.target_size} / stride {spec.stride}"
        )
    if raw.num_anchors != len(spec.anchors):
        raise FormatError(
            f"layer {raw.layer_index}: {raw.num_anchors} anchors in tensor, "
            f"{len(spec.anchors)} in anchor set"
        )

    sig = sigmoid(raw.values)
    cy, cx = np.meshgrid(np.arange(raw.grid_h), np.arange(raw.grid_w), indexing="ij")
    aw = np.array([a[0] for a in spec.anchors]).reshape(-1, 1, 1)
    ah = np.array([a[1] for a in spec.anchors]).reshape(-1, 1, 1)

    bx = ((2.0 * sig[..., 0] - 0.5) + cx) * spec.stride
    by = ((2.0 * sig[..., 1] - 0.5) + cy) * spec.stride
    bw = (2.0 * sig[..., 2]) ** 2 * aw
    bh = (2.0 * sig[..., 3]) ** 2 * ah
    scores = sig[..., 4:5] * sig[..., 5:]  # (na, gh, gw, nc)

    an, gy, gx, cls = np.nonzero(scores >= cfg.confidence_threshold)
    out = []
    for a, y, x, c in zip(an, gy, gx, cls):
        hw = bw[a, y, x] / 2.0
        hh = bh[a, y, x] / 2.0
        out.append(
            Detection(
                class_id=int(c),
                confidence=float(scores[a, y, x, c]),
                x1=float(bx[a, y, x] - hw),
                y1=float(by[a, y, x] - hh),
                x2=float(bx[a, y, x] + hw),
                y2=float(by[a, y, x] + hh),
            )
        )
    return out


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0 when the union is empty."""
    ix1 = max(a[0], b[0])
    iy1 = max(a[1], b[1])
    ix2 = min(a[2], b[2])
    iy2 = min(a[3], b[3])
    inter = max(0.0, ix2 - ix1) * max(0.0, iy2 - iy1)
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _nms_key(d: Detection):
    return (-d.confidence, d.class_id, d.x1)


def nms(candidates: Sequence[Detection], cfg: DecodeConfig) -> list[Detection]:
    """Greedy class-aware suppression with a stable, documented tie-break."""
    ordered = sorted(candidates, key=_nms_key)
    kept: list[Detection] = []
    kept_by_class: dict[int, list[Detection]] = {}
    for cand in ordered:
        same_class = kept_by_class.get(cand.class_id, ())
        if all(iou(cand.box, k.box) < cfg.nms_iou_threshold for k in same_class):
            kept.append(cand)
            kept_by_class.setdefault(cand.class_id, []).append(cand)
            if len(kept) >= cfg.max_detections:
                break
    return kept


def decode_frame(
    layers: Iterable[RawLayerOutput],
    anchors: AnchorSet,
    cfg: DecodeConfig,
    transform: LetterboxTransform,
    orig_w: int,
    orig_h: int,
) -> list[Detection]:
    """Decode all head layers, suppress, and map to original coordinates."""
    layers = list(layers)
    indices = sorted(l.layer_index for l in layers)
    if indices != list(range(len(anchors.layers))):
        raise FormatError(
            f"layer set {indices} incomplete for a {len(anchors.layers)}-layer model"
        )
    candidates: list[Detection] = []
    for raw in sorted(layers, key=lambda l: l.layer_index):
        candidates.extend(decode_layer(raw, anchors, cfg))
    out = []
    for det in nms(candidates, cfg):
        x1, y1, x2, y2 = unmap_box(det.box, transform, orig_w, orig_h)
        out.append(Detection(det.class_id, det.confidence, x1, y1, x2, y2))
    return out


# --- raw tensor and anchor metadata files -------------------------------

TENSOR_MAGIC = "TENSV1"


def write_tensor_file(path: str | Path, layers: Sequence[RawLayerOutput], strides: Sequence[int]) -> None:
    with open(path, "wb") as fh:
        fh.write(f"{TENSOR_MAGIC} {len(layers)}\n".encode("ascii"))
        for raw, stride in zip(layers, strides):
            fh.write(
                f"{raw.layer_index} {stride} {raw.num_anchors} "
                f"{raw.grid_h} {raw.grid_w} {raw.channels}\n".encode("ascii")
            )
            fh.write(raw.values.astype("<f4").tobytes())


def read_tensor_header(path: str | Path) -> int:
    """Layer count from a tensor file header, without loading payloads."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
    if len(header) != 2 or header[0] != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad tensor file header")
    return int(header[1])


def read_tensor_file(path: str | Path) -> list[RawLayerOutput]:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        if len(header) != 2 or header[0] != TENSOR_MAGIC:
            raise FormatError(f"{path}: bad tensor file header")
        n_layers = int(header[1])
        layers = []
        for _ in range(n_layers):
            line = fh.readline().decode("ascii", errors="replace").split()
            if len(line) != 6:
                raise FormatError(f"{path}: bad per-layer header {line}")
            idx, stride, na, gh, gw, ch = (int(v) for v in line)
            count = na * gh * gw * ch
            buf = fh.read(count * 4)
            if len(buf) != count * 4:
                raise FormatError(f"{path}: truncated tensor payload for layer {idx}")
            values = np.frombuffer(buf, dtype="<f4").reshape(na, gh, gw, ch)
            layers.append(RawLayerOutput(idx, gh, gw, na, ch, values.astype(np.float64)))
    return layers


def parse_anchor_file(path: str | Path):
    """Anchor metadata: per-layer ``stride: w,h w,h ...`` lines.

    Model sidecars append ``classes=<n>`` and one class name per line;
    returns (AnchorSet, registry-or-None).
    """
    layers = []
    class_names: Optional[list[str]] = None
    expected_classes = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("classes="):
            expected_classes = int(line.split("=", 1)[1])
            class_names = []
            continue
        if class_names is not None:
            class_names.append(line)
            continue
        if ":" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'stride: w,h ...' line")
        stride_part, pairs_part = line.split(":", 1)
        try:
            stride = int(stride_part.strip())
            pairs = tuple(
                (float(tok.split(",")[0]), float(tok.split(",")[1]))
                for tok in pairs_part.split()
            )
        except (ValueError, IndexError):
            raise FormatError(f"{path}:{lineno}: malformed anchor line {line!r}")
        layers.append(LayerSpec(stride, pairs))
    if expected_classes is not None and len(class_names or ()) != expected_classes:
        raise FormatError(
            f"{path}: classes={expected_classes} but {len(class_names or ())} names listed"
        )
    registry = registry_from_names(class_names) if class_names else None
    return AnchorSet(tuple(layers)), registry


def write_anchor_file(path: str | Path, anchors: AnchorSet, registry: Optional[ClassRegistry] = None) -> None:
    lines = []
    for layer in anchors.layers:
        pairs = " ".join(f"{w:g},{h:g}" for w, h in layer.anchors)
        lines.append(f"{layer.stride}: {pairs}")
    if registry is not None:
        lines.append(f"classes={len(registry)}")
        lines.extend(registry.classes)
    Path(path).write_text("\n".join(lines) + "\n")
