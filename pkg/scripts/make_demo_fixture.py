#!/usr/bin/env python3
"""Generate a small demo session: raw frame stream + matching detection file.

Usage: python3 scripts/make_demo_fixture.py <out_dir>
Then:  distwatch monitor --frames <out_dir>/frames.raw \
           --detections <out_dir>/detections.txt --out <out_dir>/run --annotate
"""

import sys
from pathlib import Path

import numpy as np

from distwatch.backend import DetectionFileRecord, write_detection_file
from distwatch.decode import Detection
from distwatch.preprocess import Frame, write_raw_stream


def main():
    out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "demo")
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0)

    frames, records = [], []
    for i in range(10):
        data = rng.integers(40, 80, (480, 640, 3), dtype=np.uint8)
        frames.append(Frame(i, 640, 480, data))
        # two walkers drifting toward each other, one bystander
        gap = 400 - 36 * i
        dets = (
            Detection(0, 0.92, 120, 180, 160, 300),
            Detection(0, 0.88, 120 + gap, 180, 160 + gap, 300),
            Detection(0, 0.75, 560, 40, 600, 150),
        )
        records.append(DetectionFileRecord(i, dets))

    write_raw_stream(out_dir / "frames.raw", frames)
    write_detection_file(out_dir / "detections.txt", records)
    print(f"wrote {out_dir}/frames.raw and {out_dir}/detections.txt")


if __name__ == "__main__":
    main()
