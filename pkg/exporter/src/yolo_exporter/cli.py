"""Exporter command line: build architecture files, export graphs, check shapes."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .export import export_graph, shape_check
from .variants import ModelVariantConfig, build_variant, parse_architecture


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="yolo-exporter")
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="write an architecture description file")
    p_build.add_argument("--family", choices=["s", "s6"], default="s6")
    p_build.add_argument("--modified", action="store_true",
                         help="swap backbone C3 stages for BottleneckCSP")
    p_build.add_argument("--num-classes", type=int, default=80)
    p_build.add_argument("--out", required=True)

    p_export = sub.add_parser("export", help="export a portable inference graph")
    p_export.add_argument("--arch", required=True)
    p_export.add_argument("--family", choices=["s", "s6"], default="s6")
    p_export.add_argument("--modified", action="store_true")
    p_export.add_argument("--num-classes", type=int, default=80)
    p_export.add_argument("--weights", help="optional state-dict to load")
    p_export.add_argument("--out", required=True, help="graph output path")
    p_export.add_argument("--sidecar", required=True, help="anchor/class metadata path")
    p_export.add_argument("--input-size", type=int, default=640)

    p_check = sub.add_parser("check", help="validate an exported graph's shapes")
    p_check.add_argument("--graph", required=True)
    p_check.add_argument("--layers", type=int, required=True)
    p_check.add_argument("--num-classes", type=int, required=True)
    p_check.add_argument("--input-size", type=int, default=640)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "build":
        cfg = ModelVariantConfig(args.family, args.modified, args.num_classes)
        Path(args.out).write_text(build_variant(cfg))
        print(f"wrote {args.out}")
        return 0
    if args.command == "export":
        cfg = ModelVariantConfig(args.family, args.modified, args.num_classes)
        export_graph(args.arch, args.out, args.sidecar, cfg,
                     weights=args.weights, input_size=args.input_size)
        print(f"wrote {args.out} and {args.sidecar}")
        return 0
    result = shape_check(args.graph, args.layers, args.num_classes,
                         input_size=args.input_size)
    print(result)
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
