"""Detection-quality evaluation.

Greedy confidence-ordered matching at a given IoU threshold, 101-point
interpolated AP, mAP over IoU 0.50:0.05:0.95, and benchmark tables in the
same column layout as the reference reports (Model, Size, Class,
Precision, Recall, mAPval 0.5:0.95, mAPval 0.5; percentages, one decimal).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .classes import ClassRegistry
from .decode import Detection, iou
from .errors import FormatError

IOU_RANGE = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class GroundTruthRecord:
    image_id: str
    class_id: int
    box: tuple[float, float, float, float]
    ignore: bool = False


@dataclass(frozen=True)
class ClassMetrics:
    class_name: str
    precision: float  # all four metric fields are percentages in [0, 100]
    recall: float
    map_50_95: float
    map_50: float


def parse_visdrone(path: str | Path, image_id: Optional[str] = None) -> list[GroundTruthRecord]:
    """One annotation file: 8 comma-separated integers per line.

    Fields: left, top, width, height, score, category, truncation,
    occlusion. Category 0 (ignored region) and score 0 rows carry the
    ignore flag; categories 1-10 map to registry indices 0-9.
    """
    path = Path(path)
    if image_id is None:
        image_id = path.stem
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip().rstrip(",")
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 8:
            raise FormatError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
        try:
            left, top, w, h, score, category, _trunc, _occ = (int(p) for p in parts)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-integer field in {line!r}")
        ignore = category == 0 or score == 0 or not 1 <= category <= 10
        class_id = category - 1 if 1 <= category <= 10 else 0
        records.append(
            GroundTruthRecord(image_id, class_id, (left, top, left + w, top + h), ignore)
        )
    return records


def parse_visdrone_dir(directory: str | Path) -> dict[str, list[GroundTruthRecord]]:
    directory = Path(directory)
    out = {}
    for path in sorted(directory.glob("*.txt")):
        out[path.stem] = parse_visdrone(path)
    return out


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthRecord],
    iou_threshold: float,
) -> tuple[list[tuple[float, bool]], list[bool]]:
    """Greedy single-image, single-class matching.

    Returns (scored detections as (confidence, is_tp) in confidence order,
    per-GT matched flags over the non-ignored GTs). Detections that fail
    to match a real GT but overlap an ignored region at or above the
    threshold are dropped from scoring.
    """
    real = [g for g in gts if not g.ignore]
    ignored = [g for g in gts if g.ignore]
    matched = [False] * len(real)
    scored: list[tuple[float, bool]] = []
    order = sorted(range(len(dets)), key=lambda k: (-dets[k].confidence, k))
    for k in order:
        det = dets[k]
        best_iou, best_gt = 0.0, -1
        for gi, gt in enumerate(real):
            if matched[gi]:
                continue
            v = iou(det.box, gt.box)
            if v > best_iou:
                best_iou, best_gt = v, gi
        if best_gt >= 0 and best_iou >= iou_threshold:
            matched[best_gt] = True
            scored.append((det.confidence, True))
            continue
        if any(iou(det.box, g.box) >= iou_threshold for g in ignored):
            continue  # unscored: overlaps an ignored region
        scored.append((det.confidence, False))
    return scored, matched


def ap(scored: Sequence[tuple[float, bool]], num_gt: int) -> float:
    """101-point interpolated average precision.

    ``scored`` is (confidence, is_tp) pairs in any order. num_gt = 0
    reports 0 in both the with- and without-detections cases.
    """
    if num_gt <= 0 or not scored:
        return 0.0
    order = sorted(scored, key=lambda s: -s[0])
    tp = np.cumsum([1 if hit else 0 for _, hit in order])
    fp = np.cumsum([0 if hit else 1 for _, hit in order])
    recall = tp / num_gt
    precision = tp / np.maximum(tp + fp, 1)
    # precision envelope: best precision at any recall >= r
    interp = np.zeros_like(RECALL_POINTS)
    for i, r in enumerate(RECALL_POINTS):
        mask = recall >= r - 1e-12
        interp[i] = precision[mask].max() if mask.any() else 0.0
    return float(interp.mean())


def _class_scores(
    dets_by_image: dict[str, Sequence[Detection]],
    gts_by_image: dict[str, Sequence[GroundTruthRecord]],
    class_id: int,
    iou_threshold: float,
):
    scored: list[tuple[float, bool]] = []
    num_gt = 0
    for image_id in sorted(set(dets_by_image) | set(gts_by_image)):
        dets = [d for d in dets_by_image.get(image_id, ()) if d.class_id == class_id]
        gts = [g for g in gts_by_image.get(image_id, ()) if g.class_id == class_id or g.ignore]
        s, _ = match_detections(dets, gts, iou_threshold)
        scored.extend(s)
        num_gt += sum(1 for g in gts if not g.ignore and g.class_id == class_id)
    return scored, num_gt


def map_range(
    dets_by_image: dict[str, Sequence[Detection]],
    gts_by_image: dict[str, Sequence[GroundTruthRecord]],
    registry: ClassRegistry,
) -> dict[int, tuple[float, float]]:
    """Per present class: (AP@0.5, mean AP over IoU 0.50:0.05:0.95), as fractions."""
    present = sorted(
        {g.class_id for gts in gts_by_image.values() for g in gts if not g.ignore}
    )
    out = {}
    for class_id in present:
        aps = []
        for thr in IOU_RANGE:
            scored, num_gt = _class_scores(dets_by_image, gts_by_image, class_id, thr)
            aps.append(ap(scored, num_gt))
        out[class_id] = (aps[0], float(np.mean(aps)))
    return out


def pr_point(
    dets_by_image: dict[str, Sequence[Detection]],
    gts_by_image: dict[str, Sequence[GroundTruthRecord]],
    class_id: int,
    cutoff: float = 0.25,
    iou_threshold: float = 0.5,
) -> tuple[float, float]:
    """Precision/recall percentages at a confidence operating point.

    Degenerate denominators report 0 (the zero stands in for 'undefined').
    """
    kept = {
        img: [d for d in dets if d.confidence >= cutoff]
        for img, dets in dets_by_image.items()
    }
    scored, num_gt = _class_scores(kept, gts_by_image, class_id, iou_threshold)
    tp = sum(1 for _, hit in scored if hit)
    fp = len(scored) - tp
    precision = 100.0 * tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = 100.0 * tp / num_gt if num_gt > 0 else 0.0
    return precision, recall


def evaluate(
    dets_by_image: dict[str, Sequence[Detection]],
    gts_by_image: dict[str, Sequence[GroundTruthRecord]],
    registry: ClassRegistry,
    cutoff: float = 0.25,
) -> list[ClassMetrics]:
    """Full per-class metrics with the 'All' row first (unweighted mean)."""
    aps = map_range(dets_by_image, gts_by_image, registry)
    rows = []
    for class_id in sorted(aps):
        p, r = pr_point(dets_by_image, gts_by_image, class_id, cutoff)
        ap50, ap5095 = aps[class_id]
        rows.append(
            ClassMetrics(registry.class_name(class_id), p, r, 100.0 * ap5095, 100.0 * ap50)
        )
    if rows:
        all_row = ClassMetrics(
            "All",
            float(np.mean([m.precision for m in rows])),
            float(np.mean([m.recall for m in rows])),
            float(np.mean([m.map_50_95 for m in rows])),
            float(np.mean([m.map_50 for m in rows])),
        )
        rows.insert(0, all_row)
    return rows


TABLE_HEADER = "Model Size (pixels) Class Precision Recall mAPval 0.5:0.95 mAPval 0.5"


def benchmark_table(model_name: str, metrics: Sequence[ClassMetrics], size: int = 640) -> str:
    """Plain-text benchmark table, one decimal place per metric column."""
    lines = [TABLE_HEADER]
    for i, m in enumerate(metrics):
        model = model_name if i == 0 else ""
        lines.append(
            f"{model} {size} {m.class_name} {m.precision:.1f} {m.recall:.1f} "
            f"{m.map_50_95:.1f} {m.map_50:.1f}"
        )
    return "\n".join(lines) + "\n"


def write_metrics_records(path: str | Path, model_name: str, metrics: Sequence[ClassMetrics], size: int = 640) -> None:
    """Machine-readable sidecar: one key=value record per row."""
    with open(path, "w") as fh:
        fh.write(f"model={model_name}\nsize={size}\n")
        for m in metrics:
            fh.write(
                f"class={m.class_name} precision={m.precision!r} recall={m.recall!r} "
                f"map_50_95={m.map_50_95!r} map_50={m.map_50!r}\n"
            )


def read_metrics_records(path: str | Path) -> tuple[str, int, list[ClassMetrics]]:
    model_name, size = "", 640
    metrics = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("model="):
            model_name = line.split("=", 1)[1]
        elif line.startswith("size="):
            size = int(line.split("=", 1)[1])
        elif line.startswith("class="):
            m = re.fullmatch(
                r"class=(.+) precision=(\S+) recall=(\S+) map_50_95=(\S+) map_50=(\S+)",
                line,
            )
            if m is None:
                raise FormatError(f"{path}:{lineno}: malformed metrics record")
            metrics.append(
                ClassMetrics(
                    m.group(1),
                    float(m.group(2)),
                    float(m.group(3)),
                    float(m.group(4)),
                    float(m.group(5)),
                )
            )
        else:
            raise FormatError(f"{path}:{lineno}: unrecognized record {line!r}")
    return model_name, size, metrics
