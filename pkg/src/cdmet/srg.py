"""Surface-relief-grating critical dimensions.

All lengths are center-to-center coordinate differences (a 10 px wide
tooth has mid thickness 9), scaled by the calibration.  Slant angles are
measured from the horizontal axis in (0, 180) degrees: a vertical sidewall
is 90, walls whose lower end is further right than their upper end are
below 90.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .raster import Component, clean, connected_components
from .transitions import Landmarks, landmarks


@dataclass(frozen=True)
class Calibration:
    nm_per_px_x: float = 1.0
    nm_per_px_y: float = 1.0

    def __post_init__(self) -> None:
        for name, value in (("nm_per_px_x", self.nm_per_px_x), ("nm_per_px_y", self.nm_per_px_y)):
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and positive, got {value}")

    @property
    def isotropic(self) -> bool:
        return self.nm_per_px_x == self.nm_per_px_y

    def as_dict(self) -> dict:
        return {"nm_per_px_x": self.nm_per_px_x, "nm_per_px_y": self.nm_per_px_y}


@dataclass(frozen=True)
class ToothCd:
    tooth_id: int
    mid_thickness: float
    left_slant: float
    right_slant: float
    depth: float  # per-tooth top-to-bottom extent, auxiliary
    landmarks: Landmarks


@dataclass
class CdReport:
    etch_depth: float
    pitches: list[float]
    teeth: list[ToothCd]
    stats: dict[str, dict[str, float]]
    calibration: Calibration
    mid_row: int
    warnings: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "etch_depth_nm": self.etch_depth,
            "pitch_nm": list(self.pitches),
            "teeth": [
                {
                    "tooth_id": t.tooth_id,
                    "mid_thickness_nm": t.mid_thickness,
                    "left_slant_deg": t.left_slant,
                    "right_slant_deg": t.right_slant,
                    "depth_nm": t.depth,
                    "landmarks": t.landmarks.as_dict(),
                }
                for t in self.teeth
            ],
            "stats": self.stats,
            "calibration": self.calibration.as_dict(),
            "mid_row": self.mid_row,
            "warnings": list(self.warnings),
        }


def segment_teeth(mask: np.ndarray, min_area: int = 0) -> list[Component]:
    """Clean the mask, label 8-connected teeth, order left-to-right."""
    cleaned = clean(mask, min_area)
    comps = connected_components(cleaned, connectivity=8)
    if not comps:
        raise ValueError("no teeth found")
    comps.sort(key=lambda c: c.centroid[0])
    return comps


def compute_mid_row(top_row: int, bottom_row: int, fraction: float = 0.5) -> int:
    """The landmark row between global top and bottom.

    Defined as floor(top + fraction * (bottom - top) + 0.5) so the rounding
    rule is unambiguous across platforms.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"mid fraction must be in [0, 1], got {fraction}")
    return int(math.floor(top_row + fraction * (bottom_row - top_row) + 0.5))


def etch_depth(
    teeth: list[Component],
    mask: np.ndarray,
    calib: Calibration,
    min_row_support: int = 1,
) -> float:
    """Row distance between the global top and bottom transition points.

    With ``min_row_support`` > 1 a row only counts as the extreme when it
    holds that many foreground pixels, so 1-2 px attached noise tips do not
    stretch the depth.
    """
    if not teeth:
        raise ValueError("no teeth found")
    top, bottom = _global_row_range(teeth, min_row_support)
    return (bottom - top) * calib.nm_per_px_y


def _global_row_range(teeth: list[Component], min_row_support: int) -> tuple[int, int]:
    if min_row_support <= 1:
        return min(c.bbox[1] for c in teeth), max(c.bbox[3] for c in teeth)
    tops, bottoms = [], []
    for comp in teeth:
        t, b = supported_row_range(comp.patch, min_row_support)
        tops.append(t + comp.bbox[1])
        bottoms.append(b + comp.bbox[1])
    return min(tops), max(bottoms)


def mid_thickness(
    tooth: Component, mask: np.ndarray, mid_row: int, calib: Calibration
) -> float:
    lm = landmarks(mask, tooth, mid_row)
    return abs(lm.mid_right[0] - lm.mid_left[0]) * calib.nm_per_px_x


def pitch_sequence(
    teeth: list[Component], mask: np.ndarray, mid_row: int, calib: Calibration
) -> list[float]:
    """Spacing between consecutive teeth's mid-left landmarks."""
    if len(teeth) < 2:
        raise ValueError("pitch undefined: need at least 2 teeth")
    lefts = [landmarks(mask, t, mid_row).mid_left[0] for t in teeth]
    return [abs(b - a) * calib.nm_per_px_x for a, b in zip(lefts, lefts[1:])]


def slant_angles(
    tooth: Component, mask: np.ndarray, mid_row: int, calib: Calibration
) -> tuple[float, float]:
    """Sidewall angles from the two-point top-corner -> mid-edge segments."""
    lm = landmarks(mask, tooth, mid_row)
    return _slants_from_landmarks(lm, tooth.id, calib)


def _slants_from_landmarks(lm: Landmarks, tooth_id: int, calib: Calibration) -> tuple[float, float]:
    drow = (lm.mid_row - lm.top[1]) * calib.nm_per_px_y
    if drow <= 0:
        raise ValueError(f"tooth too shallow for slant (tooth {tooth_id})")
    left = math.degrees(
        math.atan2(drow, (lm.mid_left[0] - lm.top_left[0]) * calib.nm_per_px_x)
    )
    right = math.degrees(
        math.atan2(drow, (lm.mid_right[0] - lm.top_right[0]) * calib.nm_per_px_x)
    )
    return left, right


def _summary(values: list[float]) -> dict[str, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return {"count": 0}
    return {
        "count": int(arr.size),
        "mean": float(arr.mean()),
        "min": float(arr.min()),
        "max": float(arr.max()),
        "stddev": float(arr.std()),
    }


def extract_srg(
    mask: np.ndarray,
    calib: Calibration = Calibration(),
    min_area: int = 0,
    mid_fraction: float = 0.5,
) -> CdReport:
    """Full SRG report: etch depth, per-tooth CDs, pitch sequence, stats.

    Per-tooth failures (e.g. a tooth the landmark row misses) are recorded
    as warnings with the tooth id and the tooth is skipped; the report
    fails only when no tooth survives.
    """
    cleaned = clean(mask, min_area)
    comps = connected_components(cleaned, connectivity=8)
    if not comps:
        raise ValueError("no teeth found")
    comps.sort(key=lambda c: c.centroid[0])

    top_row = min(c.bbox[1] for c in comps)
    bottom_row = max(c.bbox[3] for c in comps)
    mid_row = compute_mid_row(top_row, bottom_row, mid_fraction)
    depth = (bottom_row - top_row) * calib.nm_per_px_y

    warnings: list[str] = []
    teeth: list[ToothCd] = []
    tooth_marks: list[Landmarks] = []
    for comp in comps:
        try:
            lm = landmarks(cleaned, comp, mid_row)
            left, right = _slants_from_landmarks(lm, comp.id, calib)
        except ValueError as exc:
            warnings.append(f"tooth {comp.id}: {exc}")
            continue
        teeth.append(
            ToothCd(
                tooth_id=comp.id,
                mid_thickness=abs(lm.mid_right[0] - lm.mid_left[0]) * calib.nm_per_px_x,
                left_slant=left,
                right_slant=right,
                depth=(comp.bbox[3] - comp.bbox[1]) * calib.nm_per_px_y,
                landmarks=lm,
            )
        )
        tooth_marks.append(lm)

    if not teeth:
        raise ValueError("no teeth found: " + "; ".join(warnings))

    if len(tooth_marks) >= 2:
        lefts = [lm.mid_left[0] for lm in tooth_marks]
        pitches = [abs(b - a) * calib.nm_per_px_x for a, b in zip(lefts, lefts[1:])]
    else:
        pitches = []
        warnings.append("pitch undefined: need at least 2 teeth")

    stats = {
        "mid_thickness": _summary([t.mid_thickness for t in teeth]),
        "left_slant": _summary([t.left_slant for t in teeth]),
        "right_slant": _summary([t.right_slant for t in teeth]),
        "tooth_depth": _summary([t.depth for t in teeth]),
        "pitch": _summary(pitches),
    }
    return CdReport(
        etch_depth=depth,
        pitches=pitches,
        teeth=teeth,
        stats=stats,
        calibration=calib,
        mid_row=mid_row,
        warnings=warnings,
    )
