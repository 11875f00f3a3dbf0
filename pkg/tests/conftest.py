import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from distwatch.backend import DetectionFileBackend, DetectionFileRecord
from distwatch.decode import Detection
from distwatch.preprocess import Frame


def person(x1, y1, x2, y2, conf=0.9, class_id=0):
    return Detection(class_id, conf, x1, y1, x2, y2)


def make_frame(index, width=400, height=400):
    return Frame(index, width, height, np.zeros((height, width, 3), dtype=np.uint8))


@pytest.fixture
def synthetic_session():
    """Bundled 10-frame synthetic fixture: varying person layouts.

    Frames are 400x400; boxes are 20x40 around the listed centers.
    """
    layouts = [
        [],                                            # 0: empty
        [(100, 100)],                                  # 1: lone person
        [(100, 100), (150, 100)],                      # 2: 50 px apart (violating)
        [(50, 50), (350, 350)],                        # 3: far apart (Low)
        [(100, 100), (320, 100)],                      # 4: 220 px (Medium)
        [(50, 50), (100, 50), (350, 350)],             # 5: one violating pair + loner
        [(10, 10), (30, 10), (50, 10)],                # 6: chain of violations
        [(100, 200), (360, 200)],                      # 7: 260 px (Low)
        [(200, 200), (200, 250), (200, 300)],          # 8: all High
        [(40, 40)],                                    # 9: lone person
    ]
    frames, records = [], []
    for i, centers in enumerate(layouts):
        frames.append(make_frame(i))
        dets = tuple(
            person(cx - 10, cy - 20, cx + 10, cy + 20) for cx, cy in centers
        )
        records.append(DetectionFileRecord(i, dets))
    return frames, DetectionFileBackend(records)
