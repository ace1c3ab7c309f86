"""Transition points and per-component landmark classification.

A transition point is a foreground pixel with at least one background
4-neighbor (left/right/up/down); out-of-image counts as background.
Landmarks name the six per-component points the CD formulas consume.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import Component

SIDES = ("left", "right", "up", "down")


@dataclass(frozen=True)
class TransitionPoint:
    pos: tuple[int, int]  # (col, row)
    sides: frozenset[str]  # background directions, subset of SIDES


@dataclass(frozen=True)
class Landmarks:
    """The six named points of one component, all (col, row).

    ``top``/``bottom`` are the extreme-row transition points (ties resolved
    to the smallest column), ``mid_*`` the extreme-column transition points
    on ``mid_row``, ``top_*`` the extreme-column transition points on the
    top point's row.
    """

    top: tuple[int, int]
    bottom: tuple[int, int]
    mid_left: tuple[int, int]
    mid_right: tuple[int, int]
    top_left: tuple[int, int]
    top_right: tuple[int, int]
    mid_row: int

    def as_dict(self) -> dict:
        return {
            "top": list(self.top),
            "bottom": list(self.bottom),
            "mid_left": list(self.mid_left),
            "mid_right": list(self.mid_right),
            "top_left": list(self.top_left),
            "top_right": list(self.top_right),
            "mid_row": self.mid_row,
        }


def _side_background(mask: np.ndarray) -> dict[str, np.ndarray]:
    """Per-direction arrays: True where that 4-neighbor is background."""
    padded = np.pad(mask, 1, constant_values=False)
    return {
        "left": ~padded[1:-1, :-2],
        "right": ~padded[1:-1, 2:],
        "up": ~padded[:-2, 1:-1],
        "down": ~padded[2:, 1:-1],
    }


def transition_mask(mask: np.ndarray) -> np.ndarray:
    """Boolean array marking all transition points of the mask."""
    mask = np.asarray(mask, dtype=bool)
    sides = _side_background(mask)
    any_bg = sides["left"] | sides["right"] | sides["up"] | sides["down"]
    return mask & any_bg


def find_transition_points(mask: np.ndarray) -> list[TransitionPoint]:
    """All transition points, sorted by (row, col)."""
    mask = np.asarray(mask, dtype=bool)
    sides = _side_background(mask)
    tmask = mask & (sides["left"] | sides["right"] | sides["up"] | sides["down"])
    rows, cols = np.nonzero(tmask)  # row-major, already (row, col)-sorted
    points = []
    for r, c in zip(rows.tolist(), cols.tolist()):
        tags = frozenset(name for name in SIDES if sides[name][r, c])
        points.append(TransitionPoint(pos=(c, r), sides=tags))
    return points


def supported_row_range(pixels: np.ndarray, min_row_support: int = 1) -> tuple[int, int]:
    """First and last row holding at least ``min_row_support`` foreground
    pixels; falls back to the raw extremes when no row qualifies.

    Support > 1 rejects rows thinner than the metrological resolution,
    which is what keeps attached salt-and-pepper chains (1-2 px wide,
    untouched by area cleanup) out of the extreme-row CDs.
    """
    row_counts = np.count_nonzero(pixels, axis=1)
    rows = np.nonzero(row_counts >= min_row_support)[0]
    if rows.size == 0:
        rows = np.nonzero(row_counts > 0)[0]
    if rows.size == 0:
        raise ValueError("mask has no foreground")
    return int(rows[0]), int(rows[-1])


def landmarks(
    mask: np.ndarray, comp: Component, mid_row: int, min_row_support: int = 1
) -> Landmarks:
    """Classify the six landmark points of one component.

    Neighbors outside the component are background for this purpose: a
    4-neighbor in foreground always belongs to the same 8-connected
    component, so the component patch alone decides transitions.  With
    ``min_row_support`` > 1 the top/bottom rows are the supported extremes
    (see :func:`supported_row_range`).
    """
    tmask = transition_mask(comp.patch)
    rows, cols = np.nonzero(tmask)
    if rows.size == 0:
        raise ValueError(f"component {comp.id} has no transition points")
    c0, r0, _, _ = comp.bbox
    top_patch, bottom_patch = supported_row_range(comp.patch, min_row_support)
    rows = rows + r0
    cols = cols + c0

    def leftmost_on(row: int) -> tuple[int, int]:
        sel = cols[rows == row]
        return (int(sel.min()), row)

    def rightmost_on(row: int) -> tuple[int, int]:
        sel = cols[rows == row]
        return (int(sel.max()), row)

    top_row = top_patch + r0
    bottom_row = bottom_patch + r0
    if not np.any(rows == mid_row):
        raise ValueError(f"landmark row empty: row {mid_row} misses component {comp.id}")

    return Landmarks(
        top=leftmost_on(top_row),
        bottom=leftmost_on(bottom_row),
        mid_left=leftmost_on(mid_row),
        mid_right=rightmost_on(mid_row),
        top_left=leftmost_on(top_row),
        top_right=rightmost_on(top_row),
        mid_row=int(mid_row),
    )
