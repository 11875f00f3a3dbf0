"""Model variant configuration and architecture description files.

The two supported families are the small 3-output-layer model (strides
8/16/32) and the larger 4-output-layer model (strides 8/16/32/64). The
"modified" flavor swaps every backbone C3 stage for BottleneckCSP; the
neck and head are untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

ARCH_MAGIC = "ARCHV1"

VISDRONE_NAMES = (
    "Pedestrian", "People", "Bicycle", "Car", "Van", "Truck", "Tricycle",
    "Awning-tricycle", "Bus", "Motor",
)

COCO_NAMES = (
    "person", "bicycle", "car", "motorcycle", "airplane", "bus", "train",
    "truck", "boat", "traffic light", "fire hydrant", "stop sign",
    "parking meter", "bench", "bird", "cat", "dog", "horse", "sheep", "cow",
    "elephant", "bear", "zebra", "giraffe", "backpack", "umbrella",
    "handbag", "tie", "suitcase", "frisbee", "skis", "snowboard",
    "sports ball", "kite", "baseball bat", "baseball glove", "skateboard",
    "surfboard", "tennis racket", "bottle", "wine glass", "cup", "fork",
    "knife", "spoon", "bowl", "banana", "apple", "sandwich", "orange",
    "broccoli", "carrot", "hot dog", "pizza", "donut", "cake", "chair",
    "couch", "potted plant", "bed", "dining table", "toilet", "tv",
    "laptop", "mouse", "remote", "keyboard", "cell phone", "microwave",
    "oven", "toaster", "sink", "refrigerator", "book", "clock", "vase",
    "scissors", "teddy bear", "hair drier", "toothbrush",
)

# 3 anchor pairs per output layer, at input scale
ANCHORS_3LAYER = (
    ((10, 13), (16, 30), (33, 23)),
    ((30, 61), (62, 45), (59, 119)),
    ((116, 90), (156, 198), (373, 326)),
)
ANCHORS_4LAYER = (
    ((19, 27), (44, 40), (38, 94)),
    ((96, 68), (86, 152), (180, 137)),
    ((140, 301), (303, 264), (238, 542)),
    ((436, 615), (739, 380), (925, 792)),
)

STRIDES_3LAYER = (8, 16, 32)
STRIDES_4LAYER = (8, 16, 32, 64)


@dataclass(frozen=True)
class Stage:
    section: str  # backbone | head
    index: int
    sources: tuple[int, ...]  # -1 = previous stage
    kind: str
    repeats: int
    channels: int
    args: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ModelVariantConfig:
    family: str  # "s" (3 layers) or "s6" (4 layers)
    modified: bool  # backbone C3 -> BottleneckCSP
    num_classes: int
    depth_multiple: float = 0.33
    width_multiple: float = 0.50

    def __post_init__(self):
        if self.family not in ("s", "s6"):
            raise ValueError("family must be 's' or 's6'")
        if self.num_classes <= 0:
            raise ValueError("num_classes must be positive")

    @property
    def strides(self):
        return STRIDES_3LAYER if self.family == "s" else STRIDES_4LAYER

    @property
    def anchors(self):
        return ANCHORS_3LAYER if self.family == "s" else ANCHORS_4LAYER


def _conv(section, i, ch, k, s):
    return Stage(section, i, (-1,), "Conv", 1, ch, {"k": k, "s": s})


def _c3(section, i, ch, n, shortcut=True):
    return Stage(section, i, (-1,), "C3", n, ch, {"shortcut": shortcut})


def _template_s() -> list[Stage]:
    b, h = "backbone", "head"
    return [
        _conv(b, 0, 64, 6, 2),
        _conv(b, 1, 128, 3, 2),
        _c3(b, 2, 128, 3),
        _conv(b, 3, 256, 3, 2),
        _c3(b, 4, 256, 6),
        _conv(b, 5, 512, 3, 2),
        _c3(b, 6, 512, 9),
        _conv(b, 7, 1024, 3, 2),
        _c3(b, 8, 1024, 3),
        Stage(b, 9, (-1,), "SPPF", 1, 1024, {"k": 5}),
        _conv(h, 10, 512, 1, 1),
        Stage(h, 11, (-1,), "Upsample", 1, 0),
        Stage(h, 12, (-1, 6), "Concat", 1, 0),
        _c3(h, 13, 512, 3, shortcut=False),
        _conv(h, 14, 256, 1, 1),
        Stage(h, 15, (-1,), "Upsample", 1, 0),
        Stage(h, 16, (-1, 4), "Concat", 1, 0),
        _c3(h, 17, 256, 3, shortcut=False),       # P3
        _conv(h, 18, 256, 3, 2),
        Stage(h, 19, (-1, 14), "Concat", 1, 0),
        _c3(h, 20, 512, 3, shortcut=False),       # P4
        _conv(h, 21, 512, 3, 2),
        Stage(h, 22, (-1, 10), "Concat", 1, 0),
        _c3(h, 23, 1024, 3, shortcut=False),      # P5
        Stage(h, 24, (17, 20, 23), "Head", 1, 0),
    ]


def _template_s6() -> list[Stage]:
    b, h = "backbone", "head"
    return [
        _conv(b, 0, 64, 6, 2),
        _conv(b, 1, 128, 3, 2),
        _c3(b, 2, 128, 3),
        _conv(b, 3, 256, 3, 2),
        _c3(b, 4, 256, 6),
        _conv(b, 5, 512, 3, 2),
        _c3(b, 6, 512, 9),
        _conv(b, 7, 768, 3, 2),
        _c3(b, 8, 768, 3),
        _conv(b, 9, 1024, 3, 2),
        _c3(b, 10, 1024, 3),
        Stage(b, 11, (-1,), "SPPF", 1, 1024, {"k": 5}),
        _conv(h, 12, 768, 1, 1),
        Stage(h, 13, (-1,), "Upsample", 1, 0),
        Stage(h, 14, (-1, 8), "Concat", 1, 0),
        _c3(h, 15, 768, 3, shortcut=False),
        _conv(h, 16, 512, 1, 1),
        Stage(h, 17, (-1,), "Upsample", 1, 0),
        Stage(h, 18, (-1, 6), "Concat", 1, 0),
        _c3(h, 19, 512, 3, shortcut=False),
        _conv(h, 20, 256, 1, 1),
        Stage(h, 21, (-1,), "Upsample", 1, 0),
        Stage(h, 22, (-1, 4), "Concat", 1, 0),
        _c3(h, 23, 256, 3, shortcut=False),       # P3
        _conv(h, 24, 256, 3, 2),
        Stage(h, 25, (-1, 20), "Concat", 1, 0),
        _c3(h, 26, 512, 3, shortcut=False),       # P4
        _conv(h, 27, 512, 3, 2),
        Stage(h, 28, (-1, 16), "Concat", 1, 0),
        _c3(h, 29, 768, 3, shortcut=False),       # P5
        _conv(h, 30, 768, 3, 2),
        Stage(h, 31, (-1, 12), "Concat", 1, 0),
        _c3(h, 32, 1024, 3, shortcut=False),      # P6
        Stage(h, 33, (23, 26, 29, 32), "Head", 1, 0),
    ]


KNOWN_BLOCK_KINDS = {"Conv", "C3", "BottleneckCSP", "SPPF", "Upsample", "Concat", "Head"}


def variant_stages(cfg: ModelVariantConfig) -> list[Stage]:
    stages = _template_s() if cfg.family == "s" else _template_s6()
    if not cfg.modified:
        return stages
    out = []
    for st in stages:
        if st.section == "backbone" and st.kind == "C3":
            out.append(Stage(st.section, st.index, st.sources, "BottleneckCSP",
                             st.repeats, st.channels, st.args))
        else:
            out.append(st)
    return out


def build_variant(cfg: ModelVariantConfig) -> str:
    """Render the architecture description file."""
    lines = [
        f"{ARCH_MAGIC} depth_multiple={cfg.depth_multiple} "
        f"width_multiple={cfg.width_multiple} classes={cfg.num_classes} "
        f"layers={len(cfg.strides)}"
    ]
    for st in variant_stages(cfg):
        if st.kind not in KNOWN_BLOCK_KINDS:
            raise ValueError(f"unknown block kind {st.kind}")
        sources = ",".join(str(s) for s in st.sources)
        args = " ".join(f"{k}={v}" for k, v in sorted(st.args.items()))
        line = (f"{st.section} {st.index} from={sources} kind={st.kind} "
                f"repeats={st.repeats} channels={st.channels}")
        if args:
            line += f" {args}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def parse_architecture(text: str):
    """Inverse of build_variant: (header dict, list of Stage)."""
    lines = [l for l in text.splitlines() if l.strip()]
    head = lines[0].split()
    if head[0] != ARCH_MAGIC:
        raise ValueError(f"bad architecture header {lines[0]!r}")
    header = dict(tok.split("=", 1) for tok in head[1:])
    stages = []
    for line in lines[1:]:
        toks = line.split()
        section, index = toks[0], int(toks[1])
        fields = dict(tok.split("=", 1) for tok in toks[2:])
        kind = fields["kind"]
        if kind not in KNOWN_BLOCK_KINDS:
            raise ValueError(f"unknown block kind {kind}")
        args = {}
        for key, value in fields.items():
            if key in ("from", "kind", "repeats", "channels"):
                continue
            if value in ("True", "False"):
                args[key] = value == "True"
            else:
                args[key] = int(value)
        stages.append(Stage(
            section, index,
            tuple(int(s) for s in fields["from"].split(",")),
            kind, int(fields["repeats"]), int(fields["channels"]), args,
        ))
    return header, stages
