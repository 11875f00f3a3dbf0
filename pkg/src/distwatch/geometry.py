"""Centroids, pairwise distances, calibration, and risk bands.

Risk bands (in calibrated units, or raw pixels when uncalibrated):
High below 200, Medium on the closed interval [200, 250], Low above 250.
A pair is a violation when its distance falls below the violation
threshold; proximity is the hazard, so the check is strictly "below".
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .decode import Detection
from .errors import ConfigError


class RiskLevel(enum.IntEnum):
    """Ordered so that higher value means higher risk."""

    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @property
    def letter(self) -> str:
        return {RiskLevel.HIGH: "H", RiskLevel.MEDIUM: "M", RiskLevel.LOW: "L"}[self]


@dataclass(frozen=True)
class Centroid:
    x: float
    y: float
    detection_index: int = 0


@dataclass(frozen=True)
class CalibrationProfile:
    pixels_per_unit: float
    unit: str = "unit"

    def __post_init__(self):
        if self.pixels_per_unit <= 0:
            raise ConfigError("pixels_per_unit must be positive")


DEFAULT_HIGH_BELOW = 200.0
DEFAULT_MEDIUM_UPPER = 250.0
DEFAULT_VIOLATION_UNCALIBRATED = 200.0
DEFAULT_VIOLATION_CALIBRATED = 50.0  # cm, when a pixel scale is known


@dataclass(frozen=True)
class Thresholds:
    high_below: float = DEFAULT_HIGH_BELOW
    medium_upper: float = DEFAULT_MEDIUM_UPPER
    violation_below: float = DEFAULT_VIOLATION_UNCALIBRATED

    def __post_init__(self):
        if not 0 < self.high_below <= self.medium_upper:
            raise ConfigError("need 0 < high_below <= medium_upper")
        if self.violation_below <= 0:
            raise ConfigError("violation_below must be positive")


def default_thresholds(cal: Optional[CalibrationProfile]) -> Thresholds:
    """Defaults depend on calibration: 200 raw pixels vs 50 physical units."""
    if cal is None:
        return Thresholds()
    return Thresholds(violation_below=DEFAULT_VIOLATION_CALIBRATED)


@dataclass(frozen=True)
class DistanceRecord:
    i: int
    j: int
    distance_px: float
    distance_units: Optional[float]  # None when uncalibrated
    risk: RiskLevel
    violating: bool

    def __post_init__(self):
        if self.i >= self.j:
            raise ValueError("pair indices must satisfy i < j")


def centroid(d: Detection, index: int = 0) -> Centroid:
    return Centroid((d.x1 + d.x2) / 2.0, (d.y1 + d.y2) / 2.0, index)


def euclidean(a: Centroid, b: Centroid) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def to_units(d_px: float, cal: Optional[CalibrationProfile]) -> float:
    """Pixels -> physical units; identity when uncalibrated."""
    if cal is None:
        return d_px
    return d_px / cal.pixels_per_unit


def classify_risk(d: float, t: Thresholds) -> RiskLevel:
    if d < t.high_below:
        return RiskLevel.HIGH
    if d <= t.medium_upper:
        return RiskLevel.MEDIUM
    return RiskLevel.LOW


def pairwise(
    persons: Sequence[Centroid],
    t: Thresholds,
    cal: Optional[CalibrationProfile] = None,
) -> list[DistanceRecord]:
    """All C(n,2) distance records, ordered by (i, j)."""
    n = len(persons)
    if n < 2:
        return []
    coords = np.array([(c.x, c.y) for c in persons])
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    scale = cal.pixels_per_unit if cal is not None else 1.0
    records = []
    for i in range(n):
        for j in range(i + 1, n):
            d_px = float(dist[i, j])
            d_units = d_px / scale
            records.append(
                DistanceRecord(
                    i=i,
                    j=j,
                    distance_px=d_px,
                    distance_units=d_units if cal is not None else None,
                    risk=classify_risk(d_units, t),
                    violating=d_units < t.violation_below,
                )
            )
    return records


def load_calibration(path: str | Path):
    """Parse a key=value calibration profile.

    Recognized keys: pixels_per_unit, unit, high_below, medium_upper,
    violation_below. Returns (CalibrationProfile or None, Thresholds).
    """
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value

    cal = None
    if "pixels_per_unit" in values:
        try:
            ppu = float(values["pixels_per_unit"])
        except ValueError:
            raise ConfigError(f"{path}: pixels_per_unit is not a number")
        cal = CalibrationProfile(ppu, values.get("unit", "unit"))

    base = default_thresholds(cal)
    def _num(key, fallback):
        if key not in values:
            return fallback
        try:
            return float(values[key])
        except ValueError:
            raise ConfigError(f"{path}: {key} is not a number")

    thresholds = Thresholds(
        high_below=_num("high_below", base.high_below),
        medium_upper=_num("medium_upper", base.medium_upper),
        violation_below=_num("violation_below", base.violation_below),
    )
    return cal, thresholds
