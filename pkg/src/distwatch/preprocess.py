"""Frame ingestion and letterbox geometry.

Frames come from an image directory (lexicographic order) or a raw stream
file with header ``RAWV1 <width> <height> <channels>``. Letterboxing maps
frames onto the network's square input while preserving aspect ratio;
``unmap_box`` is the exact inverse for boxes inside the content region.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np

from .errors import FormatError

PAD_VALUE = 114  # neutral gray letterbox fill
DEFAULT_TARGET_SIZE = 640

Box = tuple[float, float, float, float]


@dataclass(frozen=True, eq=False)
class Frame:
    frame_index: int
    width: int
    height: int
    data: np.ndarray  # (height, width, 3) uint8, RGB

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be non-negative")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("frame dimensions must be positive")
        if self.data.shape != (self.height, self.width, 3):
            raise ValueError(
                f"frame data shape {self.data.shape} does not match "
                f"{self.height}x{self.width}x3"
            )


@dataclass(frozen=True)
class LetterboxTransform:
    scale: float
    pad_left: int
    pad_top: int
    target_size: int = DEFAULT_TARGET_SIZE

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.pad_left < 0 or self.pad_top < 0:
            raise ValueError("padding must be non-negative")


@dataclass(frozen=True)
class FrameError:
    """Per-frame ingestion failure; the session continues past it."""

    source: str
    reason: str


def _resize_nearest(data: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    h, w = data.shape[:2]
    rows = np.minimum((np.arange(new_h) * h // new_h), h - 1)
    cols = np.minimum((np.arange(new_w) * w // new_w), w - 1)
    return data[rows[:, None], cols[None, :]]


def _resize_bilinear(data: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    h, w = data.shape[:2]
    ys = (np.arange(new_h) + 0.5) * h / new_h - 0.5
    xs = (np.arange(new_w) + 0.5) * w / new_w - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = data[y0[:, None], x0[None, :]] * (1 - wx) + data[y0[:, None], x1[None, :]] * wx
    bot = data[y1[:, None], x0[None, :]] * (1 - wx) + data[y1[:, None], x1[None, :]] * wx
    return (top * (1 - wy) + bot * wy).astype(np.uint8)


def letterbox(
    frame: Frame,
    target_size: int = DEFAULT_TARGET_SIZE,
    pad_value: int = PAD_VALUE,
    bilinear: bool = False,
) -> tuple[np.ndarray, LetterboxTransform]:
    """Aspect-preserving resize onto a square canvas.

    Padding is split symmetrically; odd remainders go to bottom/right.
    """
    if target_size <= 0:
        raise ValueError("target_size must be positive")
    scale = min(target_size / frame.width, target_size / frame.height)
    new_w = max(1, round(frame.width * scale))
    new_h = max(1, round(frame.height * scale))
    pad_left = (target_size - new_w) // 2
    pad_top = (target_size - new_h) // 2

    out = np.full((target_size, target_size, 3), pad_value, dtype=np.uint8)
    if (new_h, new_w) == (frame.height, frame.width):
        content = frame.data
    elif bilinear:
        content = _resize_bilinear(frame.data, new_h, new_w)
    else:
        content = _resize_nearest(frame.data, new_h, new_w)
    out[pad_top:pad_top + new_h, pad_left:pad_left + new_w] = content
    return out, LetterboxTransform(scale, pad_left, pad_top, target_size)


def map_box(box: Box, t: LetterboxTransform) -> Box:
    """Original-image box -> letterboxed coordinates (forward transform)."""
    x1, y1, x2, y2 = box
    return (
        x1 * t.scale + t.pad_left,
        y1 * t.scale + t.pad_top,
        x2 * t.scale + t.pad_left,
        y2 * t.scale + t.pad_top,
    )


def unmap_box(box: Box, t: LetterboxTransform, orig_w: int, orig_h: int) -> Box:
    """Letterboxed box -> original coordinates, clipped to the image."""
    x1, y1, x2, y2 = box
    x1 = min(max((x1 - t.pad_left) / t.scale, 0.0), float(orig_w))
    x2 = min(max((x2 - t.pad_left) / t.scale, 0.0), float(orig_w))
    y1 = min(max((y1 - t.pad_top) / t.scale, 0.0), float(orig_h))
    y2 = min(max((y2 - t.pad_top) / t.scale, 0.0), float(orig_h))
    return (x1, y1, x2, y2)


RAW_STREAM_MAGIC = "RAWV1"


def _iter_raw_stream(path: Path) -> Iterator[Frame]:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        parts = header.split()
        if len(parts) != 4 or parts[0] != RAW_STREAM_MAGIC:
            raise FormatError(f"{path}: bad raw stream header {header!r}")
        try:
            width, height, channels = (int(p) for p in parts[1:])
        except ValueError:
            raise FormatError(f"{path}: non-integer dimensions in header")
        if channels != 3 or width <= 0 or height <= 0:
            raise FormatError(f"{path}: unsupported raw stream dims {width}x{height}x{channels}")
        frame_size = width * height * 3
        payload = fh.read()
    if len(payload) % frame_size != 0:
        raise FormatError(
            f"{path}: payload of {len(payload)} bytes is not a multiple of "
            f"frame size {frame_size}"
        )
    for i in range(len(payload) // frame_size):
        chunk = payload[i * frame_size:(i + 1) * frame_size]
        data = np.frombuffer(chunk, dtype=np.uint8).reshape(height, width, 3)
        yield Frame(i, width, height, data)


def _iter_image_dir(
    path: Path,
    expected_dims: Optional[tuple[int, int]],
    on_error: Optional[Callable[[FrameError], None]],
) -> Iterator[Frame]:
    from PIL import Image, UnidentifiedImageError

    index = 0
    for name in sorted(os.listdir(path)):
        file_path = path / name
        if not file_path.is_file():
            continue
        try:
            with Image.open(file_path) as img:
                data = np.asarray(img.convert("RGB"), dtype=np.uint8)
        except (UnidentifiedImageError, OSError) as exc:
            if on_error is not None:
                on_error(FrameError(str(file_path), str(exc)))
            continue
        h, w = data.shape[:2]
        if expected_dims is not None and (w, h) != expected_dims:
            if on_error is not None:
                on_error(FrameError(str(file_path), f"dims {w}x{h} != expected {expected_dims}"))
            continue
        yield Frame(index, w, h, data)
        index += 1


def ingest_frames(
    source: str | Path,
    expected_dims: Optional[tuple[int, int]] = None,
    on_error: Optional[Callable[[FrameError], None]] = None,
) -> Iterator[Frame]:
    """Yield frames with consecutive indices starting at 0.

    Directories yield decodable images in filename order; files are read as
    raw streams. Unreadable images surface through ``on_error`` and are
    skipped; a malformed raw stream is fatal.
    """
    source = Path(source)
    if source.is_dir():
        yield from _iter_image_dir(source, expected_dims, on_error)
    elif source.is_file():
        yield from _iter_raw_stream(source)
    else:
        raise FormatError(f"frame source {source} does not exist")


def write_raw_stream(path: str | Path, frames) -> None:
    """Write frames in the raw stream format (test/demo helper)."""
    frames = list(frames)
    if not frames:
        raise ValueError("cannot write an empty raw stream without dimensions")
    w, h = frames[0].width, frames[0].height
    with open(path, "wb") as fh:
        fh.write(f"{RAW_STREAM_MAGIC} {w} {h} 3\n".encode("ascii"))
        for frame in frames:
            if (frame.width, frame.height) != (w, h):
                raise ValueError("raw stream frames must share dimensions")
            fh.write(frame.data.tobytes())


def write_ppm(path: str | Path, data: np.ndarray) -> None:
    """Write an RGB raster as binary PPM (P6)."""
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(data, dtype=np.uint8).tobytes())
