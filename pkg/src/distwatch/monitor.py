"""Per-frame distancing pipeline: filter persons, classify pairs, annotate.

A person is violating when they participate in at least one violating
pair; the frame verdict is unsafe exactly when the violating set is
non-empty. Session statistics form a monoid so partial runs can be
combined.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, TextIO

import numpy as np

from .classes import ClassRegistry
from .decode import Detection
from .errors import DistwatchError
from .geometry import (
    CalibrationProfile,
    Centroid,
    DistanceRecord,
    RiskLevel,
    Thresholds,
    centroid,
    pairwise,
)
from .preprocess import Frame, write_ppm

GREEN = (0, 255, 0)
YELLOW = (255, 255, 0)
RED = (255, 0, 0)


@dataclass(frozen=True)
class FrameReport:
    frame_index: int
    person_count: int
    records: tuple[DistanceRecord, ...]
    violating: frozenset[int]
    safe: frozenset[int]
    person_risk: tuple[Optional[RiskLevel], ...]  # worst risk per person, None if no pairs
    verdict: str  # "safe" | "unsafe"

    @property
    def violation_count(self) -> int:
        return sum(1 for r in self.records if r.violating)


@dataclass(frozen=True)
class PersonAnnotation:
    box: tuple[float, float, float, float]
    color: tuple[int, int, int]
    label: str


@dataclass(frozen=True)
class AnnotationSpec:
    persons: tuple[PersonAnnotation, ...]
    lines: tuple[tuple[tuple[float, float], tuple[float, float]], ...]


@dataclass
class SessionStats:
    frames: int = 0
    persons: int = 0
    violating_pairs: int = 0
    pairs_by_risk: dict = field(
        default_factory=lambda: {RiskLevel.HIGH: 0, RiskLevel.MEDIUM: 0, RiskLevel.LOW: 0}
    )
    max_simultaneous_violations: int = 0
    elapsed_s: float = 0.0

    @property
    def fps(self) -> float:
        return self.frames / self.elapsed_s if self.elapsed_s > 0 else 0.0

    def add(self, report: FrameReport) -> None:
        self.frames += 1
        self.persons += report.person_count
        v = report.violation_count
        self.violating_pairs += v
        self.max_simultaneous_violations = max(self.max_simultaneous_violations, v)
        for rec in report.records:
            self.pairs_by_risk[rec.risk] += 1

    def combine(self, other: "SessionStats") -> "SessionStats":
        merged = SessionStats(
            frames=self.frames + other.frames,
            persons=self.persons + other.persons,
            violating_pairs=self.violating_pairs + other.violating_pairs,
            pairs_by_risk={
                k: self.pairs_by_risk[k] + other.pairs_by_risk[k]
                for k in self.pairs_by_risk
            },
            max_simultaneous_violations=max(
                self.max_simultaneous_violations, other.max_simultaneous_violations
            ),
            elapsed_s=self.elapsed_s + other.elapsed_s,
        )
        return merged

    def counts_equal(self, other: "SessionStats") -> bool:
        """Equality on the deterministic fields (timing excluded)."""
        return (
            self.frames == other.frames
            and self.persons == other.persons
            and self.violating_pairs == other.violating_pairs
            and self.pairs_by_risk == other.pairs_by_risk
            and self.max_simultaneous_violations == other.max_simultaneous_violations
        )


def filter_persons(dets: Sequence[Detection], registry: ClassRegistry) -> list[Detection]:
    """Order-preserving subset with person-like class ids."""
    return [d for d in dets if registry.is_person(d.class_id)]


def process_frame(
    frame: Frame,
    backend,
    registry: ClassRegistry,
    thresholds: Thresholds,
    cal: Optional[CalibrationProfile] = None,
) -> tuple[FrameReport, list[Detection]]:
    """Run the full per-frame pipeline; also returns the person detections."""
    try:
        dets = backend.detections_for(frame)
    except DistwatchError as exc:
        raise type(exc)(f"frame {frame.frame_index}: {exc}") from exc
    persons = filter_persons(dets, registry)
    centroids = [centroid(d, i) for i, d in enumerate(persons)]
    records = pairwise(centroids, thresholds, cal)

    worst: list[Optional[RiskLevel]] = [None] * len(persons)
    violating: set[int] = set()
    for rec in records:
        for idx in (rec.i, rec.j):
            if worst[idx] is None or rec.risk > worst[idx]:
                worst[idx] = rec.risk
        if rec.violating:
            violating.update((rec.i, rec.j))
    safe = frozenset(range(len(persons))) - violating
    report = FrameReport(
        frame_index=frame.frame_index,
        person_count=len(persons),
        records=tuple(records),
        violating=frozenset(violating),
        safe=safe,
        person_risk=tuple(worst),
        verdict="unsafe" if violating else "safe",
    )
    return report, persons


def annotation_spec(report: FrameReport, persons: Sequence[Detection]) -> AnnotationSpec:
    """Color policy: red = violating or High, yellow = Medium, green otherwise."""
    annotated = []
    for idx, det in enumerate(persons):
        risk = report.person_risk[idx]
        if idx in report.violating or risk is RiskLevel.HIGH:
            color = RED
        elif risk is RiskLevel.MEDIUM:
            color = YELLOW
        else:
            color = GREEN
        annotated.append(PersonAnnotation(det.box, color, risk.letter if risk else ""))
    centroids = [centroid(d, i) for i, d in enumerate(persons)]
    lines = tuple(
        ((centroids[r.i].x, centroids[r.i].y), (centroids[r.j].x, centroids[r.j].y))
        for r in report.records
        if r.violating
    )
    return AnnotationSpec(tuple(annotated), lines)


# minimal 3x5 glyphs for risk labels
_GLYPHS = {
    "H": ("101", "101", "111", "101", "101"),
    "M": ("101", "111", "111", "101", "101"),
    "L": ("100", "100", "100", "100", "111"),
}


def _draw_box(img: np.ndarray, box, color) -> None:
    h, w = img.shape[:2]
    x1 = int(round(max(0, min(box[0], w - 1))))
    y1 = int(round(max(0, min(box[1], h - 1))))
    x2 = int(round(max(0, min(box[2], w - 1))))
    y2 = int(round(max(0, min(box[3], h - 1))))
    img[y1, x1:x2 + 1] = color
    img[y2, x1:x2 + 1] = color
    img[y1:y2 + 1, x1] = color
    img[y1:y2 + 1, x2] = color


def _draw_line(img: np.ndarray, p0, p1, color, thickness: int = 2) -> None:
    h, w = img.shape[:2]
    x0, y0 = p0
    x1, y1 = p1
    n = max(int(max(abs(x1 - x0), abs(y1 - y0))) + 1, 2)
    xs = np.round(np.linspace(x0, x1, n)).astype(int)
    ys = np.round(np.linspace(y0, y1, n)).astype(int)
    for dx in range(thickness):
        for dy in range(thickness):
            px = np.clip(xs + dx, 0, w - 1)
            py = np.clip(ys + dy, 0, h - 1)
            img[py, px] = color


def _draw_label(img: np.ndarray, text: str, x: int, y: int, color) -> None:
    h, w = img.shape[:2]
    cx = x
    for ch in text:
        glyph = _GLYPHS.get(ch)
        if glyph is None:
            continue
        for gy, row in enumerate(glyph):
            for gx, bit in enumerate(row):
                if bit == "1" and 0 <= y + gy < h and 0 <= cx + gx < w:
                    img[y + gy, cx + gx] = color
        cx += 4


def annotate(frame: Frame, report: FrameReport, persons: Sequence[Detection]) -> np.ndarray:
    """Draw boxes, violation lines, and risk labels; returns a new raster."""
    img = frame.data.copy()
    spec = annotation_spec(report, persons)
    for (p0, p1) in spec.lines:
        _draw_line(img, p0, p1, RED)
    for ann in spec.persons:
        _draw_box(img, ann.box, ann.color)
        if ann.label:
            _draw_label(img, ann.label, int(ann.box[0]), max(0, int(ann.box[1]) - 7), ann.color)
    return img


def format_report(report: FrameReport) -> str:
    """The documented one-frame text block of the report stream."""
    lines = [
        f"frame={report.frame_index} persons={report.person_count} "
        f"pairs={len(report.records)} violations={report.violation_count} "
        f"verdict={report.verdict}"
    ]
    for r in report.records:
        d_units = "NA" if r.distance_units is None else f"{r.distance_units:.2f}"
        lines.append(
            f"pair {r.i} {r.j} d_px={r.distance_px:.2f} d_units={d_units} "
            f"risk={r.risk.letter} viol={1 if r.violating else 0}"
        )
    return "\n".join(lines) + "\n"


def run_session(
    frames: Iterable[Frame],
    backend,
    registry: ClassRegistry,
    thresholds: Thresholds,
    cal: Optional[CalibrationProfile] = None,
    report_sink: Optional[TextIO] = None,
    frames_dir: Optional[str | Path] = None,
    on_error: Optional[Callable[[int, Exception], None]] = None,
) -> SessionStats:
    """Process frames in order, streaming reports and optional annotations.

    Per-frame errors are reported and skipped; the returned stats are the
    fold of all successful FrameReports. Worker count is capped by the
    DISTWATCH_THREADS environment variable (default 1, sequential).
    """
    stats = SessionStats()
    out_dir = Path(frames_dir) if frames_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    threads = max(1, int(os.environ.get("DISTWATCH_THREADS", "1")))
    start = time.perf_counter()

    def work(frame: Frame):
        report, persons = process_frame(frame, backend, registry, thresholds, cal)
        raster = annotate(frame, report, persons) if out_dir is not None else None
        return frame, report, raster

    def emit(frame, report, raster):
        stats.add(report)
        if report_sink is not None:
            report_sink.write(format_report(report))
        if out_dir is not None:
            write_ppm(out_dir / f"frame_{frame.frame_index}.ppm", raster)

    if threads == 1:
        for frame in frames:
            try:
                emit(*work(frame))
            except DistwatchError as exc:
                if on_error is not None:
                    on_error(frame.frame_index, exc)
    else:
        from concurrent.futures import ThreadPoolExecutor

        # executor.map preserves submission order, so reports stay sequenced
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for result in pool.map(_safe_work(work), frames):
                frame, payload = result
                if isinstance(payload, Exception):
                    if on_error is not None:
                        on_error(frame.frame_index, payload)
                    continue
                emit(*payload)

    stats.elapsed_s = time.perf_counter() - start
    return stats


def _safe_work(work):
    def wrapped(frame):
        try:
            return frame, work(frame)
        except DistwatchError as exc:
            return frame, exc
    return wrapped
