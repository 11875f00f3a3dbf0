"""Graph export and shape validation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch

from .model import build_model
from .variants import (
    COCO_NAMES,
    ModelVariantConfig,
    VISDRONE_NAMES,
    parse_architecture,
)


def class_names(num_classes: int) -> tuple[str, ...]:
    if num_classes == 10:
        return VISDRONE_NAMES
    if num_classes == 80:
        return COCO_NAMES
    return tuple(f"class_{i}" for i in range(num_classes))


def write_sidecar(path: str | Path, cfg: ModelVariantConfig) -> None:
    """Anchor/class metadata in the engine's anchor-file format."""
    lines = []
    for stride, pairs in zip(cfg.strides, cfg.anchors):
        lines.append(f"{stride}: " + " ".join(f"{w:g},{h:g}" for w, h in pairs))
    names = class_names(cfg.num_classes)
    lines.append(f"classes={len(names)}")
    lines.extend(names)
    Path(path).write_text("\n".join(lines) + "\n")


def export_graph(
    arch_path: str | Path,
    graph_path: str | Path,
    sidecar_path: str | Path,
    cfg: ModelVariantConfig,
    weights: str | Path | None = None,
    input_size: int = 640,
) -> None:
    """Instantiate the architecture file and save a traced TorchScript graph.

    Weights are random-initialized unless a state-dict path is given.
    """
    header, stages = parse_architecture(Path(arch_path).read_text())
    model = build_model(header, stages)
    if weights is not None:
        state = torch.load(weights, map_location="cpu")
        model.load_state_dict(state)
    example = torch.zeros(1, 3, input_size, input_size)
    with torch.no_grad():
        traced = torch.jit.trace(model, example)
    traced.save(str(graph_path))
    write_sidecar(sidecar_path, cfg)


@dataclass(frozen=True)
class ShapeCheckResult:
    passed: bool
    lines: tuple[str, ...]

    def __str__(self) -> str:
        return "\n".join(self.lines)


def shape_check(
    graph_path: str | Path,
    num_layers: int,
    num_classes: int,
    num_anchors: int = 3,
    input_size: int = 640,
    strides: tuple[int, ...] = (8, 16, 32, 64),
) -> ShapeCheckResult:
    """Verify output count, grid shapes, channel count, and finiteness."""
    module = torch.jit.load(str(graph_path), map_location="cpu")
    module.eval()
    with torch.no_grad():
        outputs = module(torch.zeros(1, 3, input_size, input_size))
    if not isinstance(outputs, (list, tuple)):
        outputs = [outputs]
    lines = []
    ok = True
    if len(outputs) != num_layers:
        ok = False
        names = ["P3", "P4", "P5", "P6"][:num_layers]
        missing = names[len(outputs):] or names
        lines.append(f"FAIL output count {len(outputs)} != {num_layers} "
                     f"(missing {', '.join(missing)})")
    else:
        lines.append(f"PASS output count {num_layers}")
    no = 5 + num_classes
    for i, out in enumerate(outputs[:num_layers]):
        grid = input_size // strides[i]
        expected = (1, num_anchors, grid, grid, no)
        if tuple(out.shape) != expected:
            ok = False
            lines.append(f"FAIL layer {i} shape {tuple(out.shape)} != {expected}")
        else:
            lines.append(
                f"PASS layer {i} grid {grid}x{grid} channels "
                f"{num_anchors}x{no}={num_anchors * no}"
            )
        if not torch.isfinite(out).all():
            ok = False
            lines.append(f"FAIL layer {i} non-finite values on zero input")
    lines.append("PASS finite forward" if ok else "shape check FAILED")
    return ShapeCheckResult(ok, tuple(lines))
