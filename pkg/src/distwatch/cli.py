"""Command-line entry point: detect / monitor / eval / bench.

Exit codes: 0 success, 1 violations found (with --exit-on-violation),
2 configuration error, 3 data or format error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import backend as be
from . import evaluate as ev
from . import geometry as geo
from . import monitor as mon
from .classes import get_registry
from .decode import DecodeConfig, Detection, parse_anchor_file
from .errors import ConfigError, DistwatchError, FormatError
from .preprocess import Frame, ingest_frames

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_CONFIG = 2
EXIT_DATA = 3


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=[k.value for k in be.BackendKind],
                   help="detection source kind")
    p.add_argument("--model", help="portable inference graph path")
    p.add_argument("--tensors", help="raw tensor file directory")
    p.add_argument("--detections", help="pre-computed detection file")
    p.add_argument("--anchors", help="anchor/class metadata file")
    p.add_argument("--classes", choices=["coco", "visdrone"], default="coco",
                   help="class registry")
    p.add_argument("--frames", help="frame source: image directory or raw stream file")
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--conf", type=float, default=0.25, help="confidence threshold")
    p.add_argument("--nms-iou", type=float, default=0.45, help="NMS IoU threshold")
    p.add_argument("--high-below", type=float, help="High-risk distance bound (units)")
    p.add_argument("--medium-upper", type=float, help="Medium-risk upper bound (units)")
    p.add_argument("--violation-below", type=float,
                   help="violation when pair distance is below this (units)")
    p.add_argument("--calibration", help="pixels-per-unit calibration profile file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distwatch",
        description="Social-distancing analytics over detector outputs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_detect = sub.add_parser("detect", help="decode tensors/model into a detection file")
    _add_common_flags(p_detect)

    p_monitor = sub.add_parser("monitor", help="per-frame distancing reports")
    _add_common_flags(p_monitor)
    p_monitor.add_argument("--annotate", action="store_true",
                           help="write annotated frames next to the report")
    p_monitor.add_argument("--exit-on-violation", action="store_true",
                           help="exit 1 when any frame has violations")

    p_eval = sub.add_parser("eval", help="precision/recall/mAP benchmark table")
    _add_common_flags(p_eval)
    p_eval.add_argument("--ground-truth", help="annotation directory (one .txt per image)")
    p_eval.add_argument("--cutoff", type=float, default=0.25,
                        help="confidence cutoff for the precision/recall columns")
    p_eval.add_argument("--model-name", default="model",
                        help="model column value in the table")

    p_bench = sub.add_parser("bench", help="pipeline throughput on synthetic frames")
    _add_common_flags(p_bench)
    p_bench.add_argument("--bench-frames", type=int, default=1000)
    p_bench.add_argument("--persons-per-frame", type=int, default=50)

    return parser


def _decode_config(args) -> DecodeConfig:
    return DecodeConfig(
        confidence_threshold=args.conf,
        nms_iou_threshold=args.nms_iou,
        registry=get_registry(args.classes),
    )


def _thresholds(args):
    cal = None
    base = geo.Thresholds()
    if args.calibration:
        cal, base = geo.load_calibration(args.calibration)
    kwargs = {}
    kwargs["high_below"] = args.high_below if args.high_below is not None else base.high_below
    kwargs["medium_upper"] = (
        args.medium_upper if args.medium_upper is not None else base.medium_upper
    )
    kwargs["violation_below"] = (
        args.violation_below if args.violation_below is not None else base.violation_below
    )
    return cal, geo.Thresholds(**kwargs)


def _open_backend(args, cfg: DecodeConfig, tensor_only: bool = False):
    kind = args.backend
    if kind is None:
        if args.detections:
            kind = "detection-file"
        elif args.tensors:
            kind = "raw-tensor-file"
        elif args.model:
            kind = "model"
        else:
            raise ConfigError("no backend configured; pass --detections, --tensors or --model")
    if tensor_only and kind == "detection-file":
        raise ConfigError("this command needs a tensor-producing backend (--tensors or --model)")
    path = {"model": args.model, "raw-tensor-file": args.tensors,
            "detection-file": args.detections}[kind]
    if path is None:
        raise ConfigError(f"backend kind {kind} needs its path flag")
    anchors = None
    if kind in ("model", "raw-tensor-file"):
        if not args.anchors:
            raise ConfigError(f"--anchors is required for the {kind} backend")
        anchors, sidecar_registry = parse_anchor_file(args.anchors)
        if sidecar_registry is not None:
            cfg = DecodeConfig(
                cfg.confidence_threshold, cfg.nms_iou_threshold,
                sidecar_registry, cfg.max_detections, cfg.target_size,
            )
    return be.open_backend(kind, path, cfg, anchors), cfg


def _warn_frame_error(err) -> None:
    print(f"warning: skipping {err.source}: {err.reason}", file=sys.stderr)


def cmd_detect(args) -> int:
    if not args.frames:
        raise ConfigError("--frames is required")
    if not args.out:
        raise ConfigError("--out is required")
    cfg = _decode_config(args)
    handle, cfg = _open_backend(args, cfg, tensor_only=True)
    records = []
    for frame in ingest_frames(args.frames, on_error=_warn_frame_error):
        dets = handle.detections_for(frame)
        records.append(be.DetectionFileRecord(frame.frame_index, tuple(dets)))
    be.write_detection_file(args.out, records)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def cmd_monitor(args) -> int:
    if not args.frames:
        raise ConfigError("--frames is required")
    cfg = _decode_config(args)
    handle, cfg = _open_backend(args, cfg)
    cal, thresholds = _thresholds(args)

    report_sink = sys.stdout
    frames_dir = None
    out_path = None
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        out_path = out_dir / "report.txt"
        report_sink = open(out_path, "w")
        if args.annotate:
            frames_dir = out_dir
    elif args.annotate:
        raise ConfigError("--annotate needs --out")

    errors: list[str] = []
    try:
        stats = mon.run_session(
            ingest_frames(args.frames, on_error=_warn_frame_error),
            handle,
            cfg.registry,
            thresholds,
            cal,
            report_sink=report_sink,
            frames_dir=frames_dir,
            on_error=lambda i, exc: errors.append(f"frame {i}: {exc}"),
        )
    finally:
        if out_path is not None:
            report_sink.close()
    for err in errors:
        print(f"error: {err}", file=sys.stderr)
    print(f"frames={stats.frames} fps={stats.fps:.1f} violations={stats.violating_pairs}")
    if args.exit_on_violation and stats.violating_pairs > 0:
        return EXIT_VIOLATIONS
    return EXIT_OK


def cmd_eval(args) -> int:
    if not args.detections:
        raise ConfigError("--detections is required")
    if not args.ground_truth:
        raise ConfigError("--ground-truth is required")
    registry = get_registry(args.classes)
    records = be.read_detection_file(args.detections)
    gts_by_image = ev.parse_visdrone_dir(args.ground_truth)
    # detection records pair with annotation files in sorted-stem order
    stems = sorted(gts_by_image)
    dets_by_image = {}
    for rec in records:
        if rec.frame_index >= len(stems):
            raise FormatError(
                f"detection record for frame {rec.frame_index} has no annotation file"
            )
        dets_by_image[stems[rec.frame_index]] = list(rec.detections)
    metrics = ev.evaluate(dets_by_image, gts_by_image, registry, cutoff=args.cutoff)
    table = ev.benchmark_table(args.model_name, metrics)
    print(table, end="")
    if args.out:
        ev.write_metrics_records(args.out, args.model_name, metrics)
    return EXIT_OK


def _synthetic_bench_inputs(n_frames: int, persons: int):
    """Deterministic grid of person boxes on a large virtual canvas."""
    canvas = 4096
    cols = max(1, int(np.ceil(np.sqrt(persons))))
    spacing = canvas // (cols + 1)
    dets = []
    for k in range(persons):
        cx = spacing * (1 + k % cols)
        cy = spacing * (1 + k // cols)
        dets.append(Detection(0, 0.9, cx - 20, cy - 40, cx + 20, cy + 40))
    records = [be.DetectionFileRecord(i, tuple(dets)) for i in range(n_frames)]
    shared = np.zeros((64, 64, 3), dtype=np.uint8)
    frames = [Frame(i, 64, 64, shared) for i in range(n_frames)]
    return frames, records


def cmd_bench(args) -> int:
    if args.persons_per_frame < 0:
        raise ConfigError("--persons-per-frame must be non-negative")
    if args.bench_frames <= 0:
        raise ConfigError("--bench-frames must be positive")
    registry = get_registry(args.classes)
    cal, thresholds = _thresholds(args)
    frames, records = _synthetic_bench_inputs(args.bench_frames, args.persons_per_frame)
    handle = be.DetectionFileBackend(records)

    t_backend = 0.0
    t_geometry = 0.0
    t_fold = 0.0
    stats = mon.SessionStats()
    start = time.perf_counter()
    for frame in frames:
        t0 = time.perf_counter()
        dets = handle.detections_for(frame)
        t1 = time.perf_counter()
        persons = mon.filter_persons(dets, registry)
        centroids = [geo.centroid(d, i) for i, d in enumerate(persons)]
        records_ = geo.pairwise(centroids, thresholds, cal)
        t2 = time.perf_counter()
        violating = frozenset(
            idx for r in records_ if r.violating for idx in (r.i, r.j)
        )
        report = mon.FrameReport(
            frame.frame_index, len(persons), tuple(records_), violating,
            frozenset(range(len(persons))) - violating, (None,) * len(persons),
            "unsafe" if violating else "safe",
        )
        stats.add(report)
        t3 = time.perf_counter()
        t_backend += t1 - t0
        t_geometry += t2 - t1
        t_fold += t3 - t2
    elapsed = time.perf_counter() - start
    stats.elapsed_s = elapsed

    pairs = args.persons_per_frame * (args.persons_per_frame - 1) // 2
    print(
        f"frames={stats.frames} persons_per_frame={args.persons_per_frame} "
        f"pairs_per_frame={pairs}"
    )
    print(f"fps={stats.fps:.1f}")
    print(f"stage backend={t_backend:.3f}s geometry={t_geometry:.3f}s fold={t_fold:.3f}s")
    return EXIT_OK


_COMMANDS = {
    "detect": cmd_detect,
    "monitor": cmd_monitor,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, DistwatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
