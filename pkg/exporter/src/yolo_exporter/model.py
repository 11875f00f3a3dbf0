"""Torch modules for the architecture files and the graph assembler.

C3 and BottleneckCSP follow the standard published block definitions;
the source material names the swap without defining either block, so the
usual structures are assumed (documented in the README).
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from .variants import Stage


def make_divisible(x: float, divisor: int = 8) -> int:
    return max(divisor, int(math.ceil(x / divisor) * divisor))


def autopad(k: int) -> int:
    # "same" spatial size for stride 1; even kernels pad (k-1)//2
    return (k - 1) // 2


class Conv(nn.Module):
    def __init__(self, c1, c2, k=1, s=1):
        super().__init__()
        self.conv = nn.Conv2d(c1, c2, k, s, autopad(k), bias=False)
        self.bn = nn.BatchNorm2d(c2)
        self.act = nn.SiLU()

    def forward(self, x):
        return self.act(self.bn(self.conv(x)))


class Bottleneck(nn.Module):
    def __init__(self, c1, c2, shortcut=True, e=0.5):
        super().__init__()
        c_ = int(c2 * e)
        self.cv1 = Conv(c1, c_, 1, 1)
        self.cv2 = Conv(c_, c2, 3, 1)
        self.add = shortcut and c1 == c2

    def forward(self, x):
        out = self.cv2(self.cv1(x))
        return x + out if self.add else out


class C3(nn.Module):
    def __init__(self, c1, c2, n=1, shortcut=True, e=0.5):
        super().__init__()
        c_ = int(c2 * e)
        self.cv1 = Conv(c1, c_, 1, 1)
        self.cv2 = Conv(c1, c_, 1, 1)
        self.cv3 = Conv(2 * c_, c2, 1, 1)
        self.m = nn.Sequential(*(Bottleneck(c_, c_, shortcut, e=1.0) for _ in range(n)))

    def forward(self, x):
        return self.cv3(torch.cat((self.m(self.cv1(x)), self.cv2(x)), 1))


class BottleneckCSP(nn.Module):
    def __init__(self, c1, c2, n=1, shortcut=True, e=0.5):
        super().__init__()
        c_ = int(c2 * e)
        self.cv1 = Conv(c1, c_, 1, 1)
        self.cv2 = nn.Conv2d(c1, c_, 1, 1, bias=False)
        self.cv3 = nn.Conv2d(c_, c_, 1, 1, bias=False)
        self.cv4 = Conv(2 * c_, c2, 1, 1)
        self.bn = nn.BatchNorm2d(2 * c_)
        self.act = nn.LeakyReLU(0.1)
        self.m = nn.Sequential(*(Bottleneck(c_, c_, shortcut, e=1.0) for _ in range(n)))

    def forward(self, x):
        y1 = self.cv3(self.m(self.cv1(x)))
        y2 = self.cv2(x)
        return self.cv4(self.act(self.bn(torch.cat((y1, y2), 1))))


class SPPF(nn.Module):
    def __init__(self, c1, c2, k=5):
        super().__init__()
        c_ = c1 // 2
        self.cv1 = Conv(c1, c_, 1, 1)
        self.cv2 = Conv(c_ * 4, c2, 1, 1)
        self.m = nn.MaxPool2d(kernel_size=k, stride=1, padding=k // 2)

    def forward(self, x):
        x = self.cv1(x)
        y1 = self.m(x)
        y2 = self.m(y1)
        y3 = self.m(y2)
        return self.cv2(torch.cat((x, y1, y2, y3), 1))


class DetectionHead(nn.Module):
    """Per-layer 1x1 conv to num_anchors*(5+nc) raw logits.

    Outputs (batch, anchors, grid_h, grid_w, 5+nc), no activation: the
    consumer applies the sigmoid/decode itself.
    """

    def __init__(self, in_channels, num_anchors, num_classes):
        super().__init__()
        self.na = num_anchors
        self.no = 5 + num_classes
        self.convs = nn.ModuleList(
            nn.Conv2d(c, self.na * self.no, 1) for c in in_channels
        )

    def forward(self, features):
        outs = []
        for conv, x in zip(self.convs, features):
            b, _, h, w = x.shape
            y = conv(x).view(b, self.na, self.no, h, w).permute(0, 1, 3, 4, 2)
            outs.append(y.contiguous())
        return outs


_BLOCKS = {"C3": C3, "BottleneckCSP": BottleneckCSP}


class VariantModel(nn.Module):
    """Assembles a stage list into a runnable graph."""

    def __init__(self, stages: list[Stage], depth_multiple: float,
                 width_multiple: float, num_classes: int, num_anchors: int = 3):
        super().__init__()
        self.stages = stages
        modules = []
        channels = [3]  # per-stage output channels; index 0 = input
        out_ch = {}
        for st in stages:
            src = [s if s >= 0 else len(modules) - 1 for s in st.sources]
            c_in = [channels[s + 1] for s in src]
            if st.kind == "Conv":
                c2 = make_divisible(st.channels * width_multiple)
                mod = Conv(c_in[0], c2, st.args["k"], st.args["s"])
            elif st.kind in _BLOCKS:
                c2 = make_divisible(st.channels * width_multiple)
                n = max(round(st.repeats * depth_multiple), 1)
                mod = _BLOCKS[st.kind](c_in[0], c2, n, st.args.get("shortcut", True))
            elif st.kind == "SPPF":
                c2 = make_divisible(st.channels * width_multiple)
                mod = SPPF(c_in[0], c2, st.args.get("k", 5))
            elif st.kind == "Upsample":
                c2 = c_in[0]
                mod = nn.Upsample(scale_factor=2.0, mode="nearest")
            elif st.kind == "Concat":
                c2 = sum(c_in)
                mod = None
            elif st.kind == "Head":
                c2 = 0
                mod = DetectionHead(c_in, num_anchors, num_classes)
            else:
                raise ValueError(f"unknown block kind {st.kind}")
            modules.append(mod)
            channels.append(c2)
        self.blocks = nn.ModuleList(m if m is not None else nn.Identity()
                                    for m in modules)
        self._sources = [
            tuple(s if s >= 0 else i - 1 for s in st.sources)
            for i, st in enumerate(stages)
        ]
        self._kinds = [st.kind for st in stages]

    def forward(self, x):
        saved = []
        out = None
        for i, block in enumerate(self.blocks):
            kind = self._kinds[i]
            src = self._sources[i]
            if kind == "Concat":
                out = torch.cat([saved[s] for s in src], 1)
            elif kind == "Head":
                out = tuple(block([saved[s] for s in src]))
            else:
                out = block(saved[src[0]] if saved else x)
            saved.append(out)
        return out


def build_model(header: dict, stages: list[Stage]) -> VariantModel:
    model = VariantModel(
        stages,
        depth_multiple=float(header["depth_multiple"]),
        width_multiple=float(header["width_multiple"]),
        num_classes=int(header["classes"]),
    )
    model.eval()
    return model
