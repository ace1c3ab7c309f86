"""Fresnel-lens bin depths and serial-section mesh reconstruction."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .srg import Calibration


@dataclass(frozen=True)
class SurfaceProfile:
    """Topmost foreground row per column; NaN where a column is empty."""

    top_row: np.ndarray  # float array, length = mask width

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.top_row)


@dataclass
class BinDepthReport:
    top_reference_row: int
    bins: list[dict]  # {bin_id, col_start, col_end, depth_nm}
    calibration: Calibration

    def as_dict(self) -> dict:
        return {
            "top_reference_row": self.top_reference_row,
            "bins": [dict(b) for b in self.bins],
            "calibration": self.calibration.as_dict(),
        }


@dataclass(frozen=True)
class Slice:
    z: float  # nm
    points: np.ndarray  # (N, 2) float, (col, row) in px


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (V, 3) float, nm
    faces: np.ndarray  # (F, 3) int, indices into vertices


def surface_profile(mask: np.ndarray) -> SurfaceProfile:
    """Per-column topmost foreground row."""
    mask = np.asarray(mask, dtype=bool)
    any_fg = mask.any(axis=0)
    if not any_fg.any():
        raise ValueError("empty profile: mask has no foreground")
    top = np.argmax(mask, axis=0).astype(float)
    top[~any_fg] = np.nan
    return SurfaceProfile(top_row=top)


def detect_bins(profile: SurfaceProfile, jump_threshold: float = 5.0) -> list[tuple[int, int]]:
    """Maximal column intervals between surface jumps >= jump_threshold.

    Absent columns terminate a bin.  A jump-free profile is a single bin.
    Returned ranges are (col_start, col_end), inclusive.
    """
    top = profile.top_row
    present = profile.present
    if not present.any():
        raise ValueError("empty profile")
    bins: list[tuple[int, int]] = []
    start = None
    prev = None
    for col in range(top.size):
        if not present[col]:
            if start is not None:
                bins.append((start, col - 1))
                start = None
            prev = None
            continue
        if start is None:
            start = col
        elif abs(top[col] - prev) >= jump_threshold:
            bins.append((start, col - 1))
            start = col
        prev = top[col]
    if start is not None:
        bins.append((start, top.size - 1))
    return bins


def bin_depths(
    profile: SurfaceProfile,
    bins: list[tuple[int, int]],
    calib: Calibration = Calibration(),
) -> BinDepthReport:
    """Depth of each bin: its lowest surface row minus the global top row."""
    if not bins:
        raise ValueError("need at least one bin")
    top = profile.top_row
    reference = int(np.nanmin(top))
    records = []
    for k, (c0, c1) in enumerate(bins):
        seg = top[c0 : c1 + 1]
        if np.all(np.isnan(seg)):
            raise ValueError(f"bin {k} covers no surface columns")
        depth = (float(np.nanmax(seg)) - reference) * calib.nm_per_px_y
        records.append({"bin_id": k, "col_start": int(c0), "col_end": int(c1), "depth_nm": depth})
    return BinDepthReport(top_reference_row=reference, bins=records, calibration=calib)


# ---------------------------------------------------------------------------
# contour-stack meshing
# ---------------------------------------------------------------------------


def resample_closed(points: np.ndarray, count: int) -> np.ndarray:
    """Resample a closed polygon to ``count`` equal-arclength points."""
    pts = np.asarray(points, dtype=float)
    closed = np.vstack([pts, pts[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    arclen = np.concatenate([[0.0], np.cumsum(seg)])
    total = arclen[-1]
    if total <= 0.0:
        return np.repeat(pts[:1], count, axis=0)
    targets = np.arange(count) * total / count
    out = np.empty((count, 2))
    out[:, 0] = np.interp(targets, arclen, closed[:, 0])
    out[:, 1] = np.interp(targets, arclen, closed[:, 1])
    return out


def _best_cyclic_shift(a: np.ndarray, b: np.ndarray) -> int:
    """Shift of ``b`` minimizing total squared distance to ``a``."""
    n = a.shape[0]
    best_shift, best_cost = 0, math.inf
    for shift in range(n):
        rolled = np.roll(b, -shift, axis=0)
        cost = float(np.sum((a - rolled) ** 2))
        if cost < best_cost:
            best_cost, best_shift = cost, shift
    return best_shift


def build_mesh(
    slices: list[Slice],
    calib: Calibration = Calibration(),
    max_points: int = 512,
) -> Mesh:
    """Stitch adjacent slice contours into a triangle band mesh.

    Both contours of each band are resampled to N equal-arclength points
    (N = the longer contour's length, capped at ``max_points``), the upper
    ring is cyclically aligned to the lower one by minimal total distance,
    and each quad is split into two triangles.  Vertices are calibrated to
    nm; z values are taken from the slices as-is.
    """
    if len(slices) < 2:
        raise ValueError("need at least 2 slices to mesh")
    zs = [s.z for s in slices]
    if any(b <= a for a, b in zip(zs, zs[1:])):
        raise ValueError("unsorted stack: z must be strictly increasing")
    for idx, s in enumerate(slices):
        if np.asarray(s.points).shape[0] < 3:
            raise ValueError(f"degenerate slice {idx}: contour has < 3 points")

    sx, sy = calib.nm_per_px_x, calib.nm_per_px_y
    vertices: list[np.ndarray] = []
    faces: list[tuple[int, int, int]] = []

    # One shared ring size keeps interior rings common to both bands.
    n_ring = min(max_points, max(len(s.points) for s in slices))
    rings: list[np.ndarray] = []
    for s in slices:
        ring = resample_closed(np.asarray(s.points, dtype=float), n_ring)
        rings.append(np.column_stack([ring[:, 0] * sx, ring[:, 1] * sy]))

    offsets = []
    for ring, s in zip(rings, slices):
        offsets.append(len(vertices))
        for x, y in ring:
            vertices.append(np.array([x, y, s.z]))

    for i in range(len(slices) - 1):
        a, b = rings[i], rings[i + 1]
        n = a.shape[0]
        shift = _best_cyclic_shift(a, b)
        oa, ob = offsets[i], offsets[i + 1]
        for k in range(n):
            k1 = (k + 1) % n
            ia, ia1 = oa + k, oa + k1
            ib, ib1 = ob + (k + shift) % n, ob + (k1 + shift) % n
            faces.append((ia, ib, ib1))
            faces.append((ia, ib1, ia1))

    verts = np.array(vertices)
    tri = np.array(faces, dtype=int)
    areas = _triangle_areas(verts, tri)
    tri = tri[areas > 1e-12]
    return Mesh(vertices=verts, faces=tri)


def _triangle_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    if faces.size == 0:
        return np.zeros(0)
    p0 = vertices[faces[:, 0]]
    p1 = vertices[faces[:, 1]]
    p2 = vertices[faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)


def mesh_area(mesh: Mesh) -> float:
    """Total triangle area of the mesh (nm^2)."""
    return float(np.sum(_triangle_areas(mesh.vertices, mesh.faces)))


def obj_text(mesh: Mesh) -> str:
    """OBJ document: 6-decimal ``v`` lines then 1-based ``f`` lines."""
    lines = [f"# mesh: {mesh.vertices.shape[0]} vertices, {mesh.faces.shape[0]} faces"]
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.6f} {y:.6f} {z:.6f}")
    for i, j, k in mesh.faces:
        lines.append(f"f {i + 1} {j + 1} {k + 1}")
    return "\n".join(lines) + "\n"


def export_obj(mesh: Mesh, path: str | Path) -> None:
    """Write a Wavefront OBJ; byte-stable for identical meshes, and an
    empty mesh writes the header comment only."""
    Path(path).write_text(obj_text(mesh), encoding="ascii")


def parse_obj(path: str | Path) -> Mesh:
    """Minimal OBJ reader for round-trip checks (v/f lines only)."""
    vertices = []
    faces = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            vertices.append([float(v) for v in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(v) - 1 for v in parts[1:4]])
    return Mesh(
        vertices=np.array(vertices, dtype=float).reshape(-1, 3),
        faces=np.array(faces, dtype=int).reshape(-1, 3),
    )
