"""Mask ingestion and raster geometry primitives.

Conventions shared by every module in this package:

* images and masks are row-major numpy arrays indexed ``[row, col]``
* point tuples are ``(col, row)``: x grows rightward, y grows downward,
  origin at the top-left pixel
* out-of-image pixels count as background
* masks serialize as 8-bit images with foreground = 255, background = 0
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

FOREGROUND = 255
BACKGROUND = 0
DEFAULT_THRESHOLD = 128

_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT_8 = np.ones((3, 3), dtype=bool)

# 8-neighborhood in clockwise screen order (y down), starting straight up.
_MOORE_STEPS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


class MissingClassWarning(UserWarning):
    """A requested class id does not occur in the label mask."""


@dataclass(frozen=True, eq=False)
class Component:
    """One connected foreground region of a binary mask.

    ``bbox`` is (min_col, min_row, max_col, max_row), inclusive.  ``patch``
    is the boolean membership grid over the bounding box, so global pixel
    (col, row) belongs to the component iff
    ``patch[row - min_row, col - min_col]``.
    """

    id: int
    area: int
    bbox: tuple[int, int, int, int]
    centroid: tuple[float, float]
    patch: np.ndarray

    def to_mask(self, shape: tuple[int, int]) -> np.ndarray:
        """Paint this component onto a blank mask of ``shape`` (rows, cols)."""
        out = np.zeros(shape, dtype=bool)
        c0, r0, c1, r1 = self.bbox
        out[r0 : r1 + 1, c0 : c1 + 1] = self.patch
        return out


def _require_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    return mask.astype(bool, copy=False)


def load_gray(path: str | Path) -> np.ndarray:
    """Load an 8-bit grayscale image (PNG or PGM) as a uint8 array.

    Color inputs are luma-converted; anything deeper than 8 bits per
    channel is rejected.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    with Image.open(path) as img:
        if img.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
            raise ValueError(f"unsupported bit depth in {path} (mode {img.mode})")
        if img.mode != "L":
            img = img.convert("L")
        return np.asarray(img, dtype=np.uint8)


def load_labels(path: str | Path) -> np.ndarray:
    """Load a label mask (indexed PNG or 8-bit gray) where pixel value = class id."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"label mask not found: {path}")
    with Image.open(path) as img:
        if img.mode == "P":
            return np.asarray(img, dtype=np.uint8)  # palette indices are the ids
        if img.mode == "L":
            return np.asarray(img, dtype=np.uint8)
        raise ValueError(f"unsupported label-mask mode {img.mode} in {path}")


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    """Serialize a binary mask as 8-bit PNG or PGM (by extension)."""
    mask = _require_mask(mask)
    data = np.where(mask, FOREGROUND, BACKGROUND).astype(np.uint8)
    save_image(data, path)


def save_image(arr: np.ndarray, path: str | Path) -> None:
    """Write a uint8 grayscale (2-D) or RGB (H,W,3) array to PNG/PGM."""
    path = Path(path)
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    if path.suffix.lower() == ".pgm":
        if arr.ndim != 2:
            raise ValueError("PGM output supports grayscale only")
        header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
        path.write_bytes(header + arr.tobytes())
        return
    Image.fromarray(arr).save(path, format="PNG")


def binarize(img: np.ndarray, threshold: int = DEFAULT_THRESHOLD) -> np.ndarray:
    """Foreground iff intensity >= threshold."""
    return np.asarray(img) >= threshold


def extract_class(labels: np.ndarray, class_id: int) -> np.ndarray:
    """Binary mask of one class of a label mask.

    An absent class id yields an all-background mask and a
    ``MissingClassWarning`` rather than an error.
    """
    if class_id < 1:
        raise ValueError(f"class id must be >= 1, got {class_id}")
    labels = np.asarray(labels)
    mask = labels == class_id
    if not mask.any():
        warnings.warn(f"class {class_id} absent from label mask", MissingClassWarning)
    return mask


def connected_components(mask: np.ndarray, connectivity: int = 8) -> list[Component]:
    """Label foreground regions and return them in deterministic order.

    Ordering is by bounding-box (min_row, min_col) with centroid column as
    the tiebreak; ids are reassigned to match.  An empty mask yields an
    empty list.
    """
    mask = _require_mask(mask)
    if connectivity == 4:
        structure = _STRUCT_4
    elif connectivity == 8:
        structure = _STRUCT_8
    else:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")

    labels, n = ndimage.label(mask, structure=structure)
    if n == 0:
        return []

    slices = ndimage.find_objects(labels)
    counts = np.bincount(labels.ravel())
    centroids = ndimage.center_of_mass(mask, labels, index=range(1, n + 1))

    raw: list[tuple[tuple[int, int, float], Component]] = []
    for k in range(n):
        sl = slices[k]
        r0, r1 = sl[0].start, sl[0].stop - 1
        c0, c1 = sl[1].start, sl[1].stop - 1
        patch = labels[sl] == (k + 1)
        crow, ccol = centroids[k]
        comp = Component(
            id=-1,
            area=int(counts[k + 1]),
            bbox=(c0, r0, c1, r1),
            centroid=(float(ccol), float(crow)),
            patch=patch,
        )
        raw.append(((r0, c0, float(ccol)), comp))

    raw.sort(key=lambda item: item[0])
    out = []
    for new_id, (_, comp) in enumerate(raw):
        out.append(
            Component(
                id=new_id,
                area=comp.area,
                bbox=comp.bbox,
                centroid=comp.centroid,
                patch=comp.patch,
            )
        )
    return out


def clean(mask: np.ndarray, min_area: int) -> np.ndarray:
    """Drop small foreground components, then fill small background holes.

    Foreground uses 8-connectivity, holes (background regions not reaching
    the image border) use 4-connectivity.  ``min_area`` 0 is the identity.
    """
    if min_area < 0:
        raise ValueError(f"min_area must be >= 0, got {min_area}")
    mask = _require_mask(mask)
    if min_area == 0:
        return mask.copy()

    labels, n = ndimage.label(mask, structure=_STRUCT_8)
    if n:
        counts = np.bincount(labels.ravel())
        keep = counts >= min_area
        keep[0] = False
        out = keep[labels]
    else:
        out = mask.copy()

    bg_labels, m = ndimage.label(~out, structure=_STRUCT_4)
    if m:
        border = np.zeros(m + 1, dtype=bool)
        for edge in (bg_labels[0, :], bg_labels[-1, :], bg_labels[:, 0], bg_labels[:, -1]):
            border[np.unique(edge)] = True
        counts = np.bincount(bg_labels.ravel(), minlength=m + 1)
        fill = (counts < min_area) & ~border
        fill[0] = False
        out = out | fill[bg_labels]
    return out


def trace_contour(mask: np.ndarray, comp: Component) -> np.ndarray:
    """Moore boundary trace of one component, clockwise.

    Returns an (N, 2) int array of (col, row) points starting from the
    component's topmost-then-leftmost pixel.  The loop closes implicitly
    (last point is 8-adjacent to the first); thin structures revisit
    pixels, so points may repeat.
    """
    if comp.area < 1:
        raise ValueError("component is empty")
    c0, r0, _, _ = comp.bbox
    grid = np.pad(comp.patch, 1, constant_values=False)

    rows, cols = np.nonzero(grid)
    start = (int(rows[0]), int(cols[0]))  # nonzero is (row, col)-sorted

    points = [start]
    backtrack = (start[0], start[1] - 1)  # entered scanning left-to-right
    cur = start
    first_state = (cur, backtrack)
    max_steps = 8 * comp.area + 16

    for _ in range(max_steps):
        dr, dc = backtrack[0] - cur[0], backtrack[1] - cur[1]
        k = _MOORE_STEPS.index((dr, dc))
        nxt = None
        for i in range(1, 9):
            sr, sc = _MOORE_STEPS[(k + i) % 8]
            cand = (cur[0] + sr, cur[1] + sc)
            if grid[cand]:
                nxt = cand
                break
            backtrack = cand
        if nxt is None:
            break  # isolated pixel
        cur = nxt
        if (cur, backtrack) == first_state:
            break
        points.append(cur)
    else:
        raise RuntimeError(f"contour trace did not close for component {comp.id}")

    pts = np.array(points, dtype=np.int64)
    # padded patch coords -> global (col, row)
    out = np.empty_like(pts)
    out[:, 0] = pts[:, 1] - 1 + c0
    out[:, 1] = pts[:, 0] - 1 + r0
    return out


def boundary_mask(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with a background 8-neighbor or image-edge contact."""
    mask = _require_mask(mask)
    padded = np.pad(mask, 1, constant_values=False)
    interior = ndimage.binary_erosion(padded, structure=_STRUCT_8)[1:-1, 1:-1]
    return mask & ~interior
