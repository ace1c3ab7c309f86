"""Deterministic synthetic masks with analytic ground truth.

Every generator is a pure function of its spec; the ground-truth record is
a JSON-serializable dict regenerable bit-exactly from the same spec.
Rasterization uses the pixel-center rule throughout: a pixel belongs to a
shape iff its integer-coordinate center does.

Noise uses splitmix64 in counter mode (a published 64-bit mixing function
over ``seed + (index + 1) * 0x9E3779B97F4A7C15``), so noisy masks are
reproducible across platforms and languages; a pixel at row-major index i
flips iff ``splitmix64(seed, i) < floor(p * 2**64)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .ellipse import EllipseParams, ellipse_interior, params_to_conic
from .raster import connected_components

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, indices: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 outputs for counter values ``indices``."""
    z = (np.uint64(seed % (1 << 64)) + (indices.astype(np.uint64) + np.uint64(1)) * _GOLD)
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def add_noise(mask: np.ndarray, flip_prob: float, seed: int) -> np.ndarray:
    """Flip each pixel independently with probability ``flip_prob``."""
    if not 0.0 <= flip_prob <= 1.0:
        raise ValueError(f"flip probability must be in [0, 1], got {flip_prob}")
    mask = np.asarray(mask, dtype=bool)
    if flip_prob == 0.0:
        return mask.copy()
    if flip_prob == 1.0:
        return ~mask
    threshold = np.uint64(int(flip_prob * 2.0**64))
    draws = splitmix64(seed, np.arange(mask.size))
    flips = (draws < threshold).reshape(mask.shape)
    return mask ^ flips


# ---------------------------------------------------------------------------
# surface relief gratings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SrgSpec:
    tooth_count: int
    pitch: float
    depth: float
    mid_thickness: float
    left_slant_deg: float
    right_slant_deg: float
    width: int = 2048
    height: int = 1536
    top_margin: int = 40
    left_margin: float = 30.0
    seed: int = 0


def _cot(deg: float) -> float:
    rad = math.radians(deg)
    return math.cos(rad) / math.sin(rad)


def gen_srg(spec: SrgSpec) -> tuple[np.ndarray, dict]:
    """Trapezoidal teeth on a shared top/bottom band, plus analytic landmarks."""
    if spec.tooth_count < 1:
        raise ValueError("tooth count must be >= 1")
    if spec.depth < 1:
        raise ValueError("depth must be >= 1 px")
    if spec.mid_thickness < 1:
        raise ValueError("mid thickness must be >= 1 px")
    for name, slant in (("left", spec.left_slant_deg), ("right", spec.right_slant_deg)):
        if not 0.0 < slant < 180.0:
            raise ValueError(f"{name} slant must be in (0, 180) degrees")

    y_top = int(spec.top_margin)
    y_bot = y_top + int(math.floor(spec.depth))
    y_mid = y_top + 0.5 * spec.depth
    mid_row = int(math.floor(y_top + 0.5 * (y_bot - y_top) + 0.5))
    cot_l = _cot(spec.left_slant_deg)
    cot_r = _cot(spec.right_slant_deg)

    # width of the trapezoid at its extreme rows must stay >= 1 px
    spread = (cot_r - cot_l) * 0.5 * spec.depth
    if spec.mid_thickness - abs(spread) < 1.0:
        raise ValueError("spec does not fit canvas: trapezoid degenerates to < 1 px width")
    if spec.tooth_count > 1 and spec.mid_thickness + abs(spread) > spec.pitch - 2.0:
        raise ValueError("spec does not fit canvas: teeth would merge")
    if y_bot >= spec.height - 1:
        raise ValueError("spec does not fit canvas: depth exceeds canvas height")

    mask = np.zeros((spec.height, spec.width), dtype=bool)
    rows = np.arange(y_top, y_bot + 1)
    truth_teeth = []
    for k in range(spec.tooth_count):
        x_ml = spec.left_margin + k * spec.pitch
        x_mr = x_ml + spec.mid_thickness
        xl = x_ml + (rows - y_mid) * cot_l
        xr = x_mr + (rows - y_mid) * cot_r
        c0 = np.ceil(xl - 1e-9).astype(int)
        c1 = np.floor(xr + 1e-9).astype(int)
        if c0.min() < 1 or c1.max() >= spec.width - 1:
            raise ValueError("spec does not fit canvas: teeth exceed canvas width")
        for r, a, b in zip(rows, c0, c1):
            if b >= a:
                mask[r, a : b + 1] = True

        def _wall(y: float, anchor: float, cot: float) -> list[float]:
            return [anchor + (y - y_mid) * cot, float(y)]

        truth_teeth.append(
            {
                "tooth_id": k,
                "top_left": _wall(y_top, x_ml, cot_l),
                "top_right": _wall(y_top, x_mr, cot_r),
                "mid_left": _wall(mid_row, x_ml, cot_l),
                "mid_right": _wall(mid_row, x_mr, cot_r),
                "bottom_left": _wall(y_bot, x_ml, cot_l),
                "bottom_right": _wall(y_bot, x_mr, cot_r),
            }
        )

    truth = {
        "kind": "srg",
        "spec": asdict(spec),
        "etch_depth_px": float(y_bot - y_top),
        "pitch_px": float(spec.pitch),
        "mid_thickness_px": float(spec.mid_thickness),
        "left_slant_deg": spec.left_slant_deg,
        "right_slant_deg": spec.right_slant_deg,
        "top_row": y_top,
        "bottom_row": y_bot,
        "mid_row": mid_row,
        "teeth": truth_teeth,
    }
    return mask, truth


# ---------------------------------------------------------------------------
# Fresnel staircase
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FresnelSpec:
    bin_count: int
    bin_width: int
    bin_depths: tuple[float, ...]
    width: int = 1024
    height: int = 512
    top_margin: int = 40
    left_margin: int = 20
    base_margin: int = 20
    seed: int = 0


def gen_fresnel(spec: FresnelSpec) -> tuple[np.ndarray, dict]:
    """Per-bin flat tops at reference + depth, one solid slab below."""
    if spec.bin_count < 1 or spec.bin_width < 1:
        raise ValueError("bin count and width must be >= 1")
    if len(spec.bin_depths) != spec.bin_count:
        raise ValueError("bin_depths length must equal bin_count")
    if any(d < 0 for d in spec.bin_depths):
        raise ValueError("bin depths must be >= 0")

    top_ref = int(spec.top_margin)
    base_row = spec.height - spec.base_margin - 1
    if top_ref + max(spec.bin_depths) >= base_row:
        raise ValueError("spec does not fit canvas: depths reach the slab base")
    right = spec.left_margin + spec.bin_count * spec.bin_width
    if right >= spec.width - 1:
        raise ValueError("spec does not fit canvas: bins exceed canvas width")

    mask = np.zeros((spec.height, spec.width), dtype=bool)
    bins = []
    for k, depth in enumerate(spec.bin_depths):
        c0 = spec.left_margin + k * spec.bin_width
        c1 = c0 + spec.bin_width - 1
        top = top_ref + int(math.floor(depth))
        mask[top : base_row + 1, c0 : c1 + 1] = True
        bins.append({"bin_id": k, "col_start": c0, "col_end": c1, "depth_px": float(int(depth))})

    truth = {
        "kind": "fresnel",
        "spec": asdict(spec),
        "top_reference_row": top_ref,
        "base_row": base_row,
        "bins": bins,
    }
    return mask, truth


# ---------------------------------------------------------------------------
# 2-D ellipse gratings (isolated / columnar / islands)
# ---------------------------------------------------------------------------

MERGE_LEVELS = ("isolated", "columnar", "islands")


@dataclass(frozen=True)
class EllipseGratingSpec:
    a: float
    b: float
    theta_deg: float
    rows: int
    cols: int
    row_pitch: float
    col_pitch: float
    merge_level: str
    width: int = 800
    height: int = 800
    seed: int = 0
    margin: float = field(default=8.0)


def _extents(a: float, b: float, theta: float) -> tuple[float, float]:
    """Horizontal and vertical half-extents of a rotated ellipse."""
    h = math.hypot(a * math.cos(theta), b * math.sin(theta))
    v = math.hypot(a * math.sin(theta), b * math.cos(theta))
    return h, v


def lattice_centers(spec: EllipseGratingSpec) -> list[tuple[int, int, float, float]]:
    """(i, j, x, y) centers of the unit lattice, centered on the canvas."""
    x0 = (spec.width - 1 - (spec.cols - 1) * spec.col_pitch) / 2.0
    y0 = (spec.height - 1 - (spec.rows - 1) * spec.row_pitch) / 2.0
    return [
        (i, j, x0 + j * spec.col_pitch, y0 + i * spec.row_pitch)
        for i in range(spec.rows)
        for j in range(spec.cols)
    ]


def gen_ellipse_grating(spec: EllipseGratingSpec) -> tuple[np.ndarray, dict]:
    """Union of lattice ellipses; islands are the bounded complement residue."""
    if spec.merge_level not in MERGE_LEVELS:
        raise ValueError(f"merge level must be one of {MERGE_LEVELS}")
    if spec.a <= 0 or spec.b <= 0 or spec.a < spec.b:
        raise ValueError("require a >= b > 0")
    if spec.rows < 1 or spec.cols < 1:
        raise ValueError("lattice must be at least 1x1")

    theta = math.radians(spec.theta_deg)
    h_ext, v_ext = _extents(spec.a, spec.b, theta)
    _check_merge_level(spec, h_ext, v_ext)

    centers = lattice_centers(spec)
    xs = [c[2] for c in centers]
    ys = [c[3] for c in centers]
    if (
        min(xs) - h_ext < spec.margin
        or max(xs) + h_ext > spec.width - 1 - spec.margin
        or min(ys) - v_ext < spec.margin
        or max(ys) + v_ext > spec.height - 1 - spec.margin
    ):
        raise ValueError("spec does not fit canvas: lattice exceeds canvas")

    union = np.zeros((spec.height, spec.width), dtype=bool)
    units = []
    for i, j, x, y in centers:
        params = EllipseParams(center=(x, y), a=spec.a, b=spec.b, theta=theta)
        _paint_ellipse(union, params, h_ext, v_ext)
        units.append(
            {
                "unit": [i, j],
                "center": [x, y],
                "a_px": spec.a,
                "b_px": spec.b,
                "theta_deg": spec.theta_deg % 180.0,
            }
        )

    truth: dict = {
        "kind": "ellipse_grating",
        "spec": asdict(spec),
        "merge_level": spec.merge_level,
        "units": units,
    }

    if spec.merge_level == "islands":
        mask = _bounded_complement(union)
        expected = (spec.rows - 1) * (spec.cols - 1)
    else:
        mask = union
        expected = spec.rows * spec.cols if spec.merge_level == "isolated" else spec.cols

    n_comp = len(connected_components(mask, connectivity=8))
    if n_comp != expected:
        raise ValueError(
            "merge level inconsistent with pitches: "
            f"expected {expected} components for {spec.merge_level}, got {n_comp}"
        )

    if spec.merge_level == "columnar":
        truth["junction_rows"] = [
            (k + 0.5) * spec.row_pitch + (spec.height - 1 - (spec.rows - 1) * spec.row_pitch) / 2.0
            for k in range(spec.rows - 1)
        ]
        amp, mean_halfwidth = _side_cosine_reference(spec)
        truth["side_cosine"] = {
            "period_px": spec.row_pitch,
            "amplitude_px": amp,
            "mean_halfwidth_px": mean_halfwidth,
        }
    return mask, truth


def _check_merge_level(spec: EllipseGratingSpec, h_ext: float, v_ext: float) -> None:
    gap_ok_x = spec.col_pitch > 2 * h_ext + 1
    gap_ok_y = spec.row_pitch > 2 * v_ext + 1
    overlap_x = spec.col_pitch < 2 * h_ext
    overlap_y = spec.row_pitch < 2 * v_ext
    level = spec.merge_level
    if level == "isolated" and not (gap_ok_x and gap_ok_y):
        raise ValueError("merge level inconsistent with pitches: isolated units overlap")
    if level == "columnar" and not (overlap_y and gap_ok_x):
        raise ValueError(
            "merge level inconsistent with pitches: columnar needs vertical overlap only"
        )
    if level == "islands":
        if not (overlap_x and overlap_y):
            raise ValueError(
                "merge level inconsistent with pitches: islands need overlap in both axes"
            )
        # the cell center must stay uncovered for a residue island to exist
        params = EllipseParams(center=(0.0, 0.0), a=spec.a, b=spec.b, theta=math.radians(spec.theta_deg))
        covered = ellipse_interior(
            params,
            np.array([spec.col_pitch / 2.0]),
            np.array([spec.row_pitch / 2.0]),
        )[0]
        if covered:
            raise ValueError(
                "merge level inconsistent with pitches: overlap closes the residue gaps"
            )


def _paint_ellipse(mask: np.ndarray, params: EllipseParams, h_ext: float, v_ext: float) -> None:
    x, y = params.center
    c0 = max(0, int(math.floor(x - h_ext - 1)))
    c1 = min(mask.shape[1] - 1, int(math.ceil(x + h_ext + 1)))
    r0 = max(0, int(math.floor(y - v_ext - 1)))
    r1 = min(mask.shape[0] - 1, int(math.ceil(y + v_ext + 1)))
    cols, rows = np.meshgrid(np.arange(c0, c1 + 1, dtype=float), np.arange(r0, r1 + 1, dtype=float))
    mask[r0 : r1 + 1, c0 : c1 + 1] |= ellipse_interior(params, cols, rows)


def _bounded_complement(union: np.ndarray) -> np.ndarray:
    from scipy import ndimage

    bg, n = ndimage.label(~union, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], bool))
    border = np.zeros(n + 1, dtype=bool)
    for edge in (bg[0, :], bg[-1, :], bg[:, 0], bg[:, -1]):
        border[np.unique(edge)] = True
    border[0] = True
    keep = ~border
    return keep[bg]


def ellipse_row_extent(params: EllipseParams, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact horizontal extent (xmin, xmax) of an ellipse at each row; NaN
    where the row misses the ellipse."""
    a, b, c, d, e, f = params_to_conic(params)
    y = np.asarray(rows, dtype=float)
    p = b * y + d
    q = c * y * y + e * y + f
    disc = p * p - 4.0 * a * q
    ok = disc >= 0.0
    root = np.sqrt(np.where(ok, disc, 0.0))
    xmin = np.where(ok, (-p - root) / (2.0 * a), np.nan)
    xmax = np.where(ok, (-p + root) / (2.0 * a), np.nan)
    return xmin, xmax


def union_row_extents(
    units: list[EllipseParams], rows: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-row extreme columns of a union of ellipses (one merged column)."""
    rows = np.asarray(rows, dtype=float)
    left = np.full(rows.shape, np.nan)
    right = np.full(rows.shape, np.nan)
    for params in units:
        xmin, xmax = ellipse_row_extent(params, rows)
        left = np.fmin(left, xmin)
        right = np.fmax(right, xmax)
    return left, right


def _side_cosine_reference(spec: EllipseGratingSpec, samples: int = 4096) -> tuple[float, float]:
    """Fourier-fundamental amplitude and mean of the exact side profile.

    Computed by quadrature over one interior period of the column's
    halfwidth; this is what a least-squares cosine asymptotically estimates
    on the scalloped (non-cosine) side profile.
    """
    period = spec.row_pitch
    theta = math.radians(spec.theta_deg)
    y = np.linspace(-period / 2.0, period / 2.0, samples, endpoint=False)
    # halfwidth of the union near one interior unit: that unit plus its two
    # vertical neighbors
    units = [
        EllipseParams(center=(0.0, k * period), a=spec.a, b=spec.b, theta=theta)
        for k in (-1, 0, 1)
    ]
    _, right = union_row_extents(units, y)
    mean = float(np.mean(right))
    cosine = np.cos(2.0 * math.pi * y / period)
    sine = np.sin(2.0 * math.pi * y / period)
    ac = 2.0 * float(np.mean((right - mean) * cosine))
    as_ = 2.0 * float(np.mean((right - mean) * sine))
    return math.hypot(ac, as_), mean


# ---------------------------------------------------------------------------
# config-driven generation (cmd_synth)
# ---------------------------------------------------------------------------

_SPEC_TYPES = {"srg": SrgSpec, "fresnel": FresnelSpec, "grating": EllipseGratingSpec}


def spec_from_config(cfg: dict) -> SrgSpec | FresnelSpec | EllipseGratingSpec:
    """Build a generator spec from flat config keys (see README for the key
    sets); ``type`` selects the generator."""
    cfg = dict(cfg)
    kind = cfg.pop("type", None)
    if kind not in _SPEC_TYPES:
        raise ValueError(f"synth config needs type = srg | fresnel | grating, got {kind!r}")
    cls = _SPEC_TYPES[kind]
    fields = {f.name: f.type for f in cls.__dataclass_fields__.values()}  # type: ignore[union-attr]
    kwargs = {}
    for key, raw in cfg.items():
        if key not in fields:
            raise ValueError(f"unknown {kind} spec key: {key}")
        kwargs[key] = _parse_value(key, raw)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValueError(f"incomplete {kind} spec: {exc}") from None


def _parse_value(key: str, raw):
    if isinstance(raw, (int, float, tuple, list)):
        value = raw
    else:
        text = str(raw).strip()
        if key == "merge_level":
            return text
        if "," in text:
            value = tuple(float(tok) for tok in text.split(","))
        else:
            value = float(text)
    if key == "bin_depths":
        return tuple(float(v) for v in value)
    if isinstance(value, float) and value.is_integer() and key in (
        "tooth_count",
        "width",
        "height",
        "top_margin",
        "seed",
        "bin_count",
        "bin_width",
        "left_margin",
        "base_margin",
        "rows",
        "cols",
    ):
        return int(value)
    return value


def generate(spec) -> tuple[np.ndarray, dict]:
    if isinstance(spec, SrgSpec):
        return gen_srg(spec)
    if isinstance(spec, FresnelSpec):
        return gen_fresnel(spec)
    if isinstance(spec, EllipseGratingSpec):
        return gen_ellipse_grating(spec)
    raise TypeError(f"unknown spec type: {type(spec)!r}")
