"""Direct least-squares ellipse fitting and ellipse rasterization.

The fit is the constrained algebraic (conic) fit with the ellipse-specific
constraint solved through the reduced generalized-eigenvalue formulation,
run on mean-centered, RMS-scale-normalized coordinates for conditioning.
That formulation has a unique eigenvector with positive constraint value
for non-degenerate input, and none of the singularity trouble of the naive
6x6 constrained solver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CIRCLE_REL_TOL = 1e-6


@dataclass(frozen=True)
class EllipseParams:
    """Geometric ellipse parameters in the shared (col=x, row=y) frame.

    ``theta`` is the major-axis angle from +x in radians, normalized to
    [0, pi).  Circles (a == b within 1e-6 relative) report theta 0 and set
    ``circle``.
    """

    center: tuple[float, float]
    a: float
    b: float
    theta: float
    circle: bool = False

    def as_dict(self, nm_per_px: tuple[float, float] | None = None) -> dict:
        out = {
            "center_px": [self.center[0], self.center[1]],
            "a_px": self.a,
            "b_px": self.b,
            "theta_deg": math.degrees(self.theta),
            "circle": self.circle,
        }
        if nm_per_px is not None:
            scaled = scale_ellipse(self, nm_per_px[0], nm_per_px[1])
            out["a_nm"] = scaled.a
            out["b_nm"] = scaled.b
            out["center_nm"] = [scaled.center[0], scaled.center[1]]
        return out


@dataclass(frozen=True)
class FitQuality:
    rms_residual: float  # RMS algebraic distance on normalized coordinates
    point_count: int


def fit_ellipse(points: np.ndarray) -> tuple[EllipseParams, FitQuality]:
    """Fit an ellipse to (x, y) points by the stable direct conic fit.

    Raises ValueError("insufficient points") for fewer than 6 points and
    ValueError("degenerate fit") when the scatter cannot produce an ellipse
    (collinear points, rank-deficient system, non-ellipse conic).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must be (N, 2), got shape {pts.shape}")
    n = pts.shape[0]
    if n < 6:
        raise ValueError(f"insufficient points: got {n}, need 6")

    mean = pts.mean(axis=0)
    centered = pts - mean
    scale = math.sqrt(float(np.mean(np.sum(centered**2, axis=1))))
    if scale <= 0.0:
        raise ValueError("degenerate fit: coincident points")
    xn = centered[:, 0] / scale
    yn = centered[:, 1] / scale

    d1 = np.column_stack([xn * xn, xn * yn, yn * yn])
    d2 = np.column_stack([xn, yn, np.ones(n)])
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError:
        raise ValueError("degenerate fit: rank-deficient design matrix") from None
    m = s1 + s2 @ t
    # premultiply by the inverse of the constraint matrix [[0,0,2],[0,-1,0],[2,0,0]]
    m = np.array([m[2] / 2.0, -m[1], m[0] / 2.0])

    eigval, eigvec = np.linalg.eig(m)
    conic1 = None
    for k in range(3):
        if abs(eigval[k].imag) > 1e-8:
            continue
        v = np.real(eigvec[:, k])
        if 4.0 * v[0] * v[2] - v[1] ** 2 > 0.0:
            conic1 = v
            break
    if conic1 is None:
        raise ValueError("degenerate fit: no ellipse solution")
    conic = np.concatenate([conic1, t @ conic1])

    unit = conic / np.linalg.norm(conic)
    residuals = d1 @ unit[:3] + d2 @ unit[3:]
    quality = FitQuality(
        rms_residual=float(np.sqrt(np.mean(residuals**2))),
        point_count=n,
    )

    params = conic_to_params(_denormalize_conic(conic, mean, scale))
    return params, quality


def _denormalize_conic(conic: np.ndarray, mean: np.ndarray, scale: float) -> np.ndarray:
    """Map conic coefficients from normalized back to original coordinates."""
    a, b, c, d, e, f = conic
    mx, my = mean
    s = scale
    return np.array(
        [
            a,
            b,
            c,
            -2.0 * a * mx - b * my + d * s,
            -b * mx - 2.0 * c * my + e * s,
            a * mx * mx + b * mx * my + c * my * my - d * s * mx - e * s * my + f * s * s,
        ]
    )


def conic_to_params(conic: np.ndarray) -> EllipseParams:
    """Convert Ax^2 + Bxy + Cy^2 + Dx + Ey + F = 0 to geometric parameters."""
    a, b, c, d, e, f = (float(v) for v in conic)
    disc = b * b - 4.0 * a * c
    if disc >= 0.0:
        raise ValueError("degenerate fit: conic is not an ellipse")
    if a < 0.0:  # disc < 0 forces sign(a) == sign(c); make the form positive definite
        a, b, c, d, e, f = -a, -b, -c, -d, -e, -f
    xc = (2.0 * c * d - b * e) / disc
    yc = (2.0 * a * e - b * d) / disc
    f0 = a * xc * xc + b * xc * yc + c * yc * yc + d * xc + e * yc + f

    q = np.array([[a, b / 2.0], [b / 2.0, c]])
    lam, vec = np.linalg.eigh(q)
    axes_sq = -f0 / lam
    if np.any(axes_sq <= 0.0) or not np.all(np.isfinite(axes_sq)):
        raise ValueError("degenerate fit: conic has no real ellipse axes")
    # smaller eigenvalue -> larger axis
    major_idx = int(np.argmin(lam))
    semi_major = math.sqrt(float(axes_sq[major_idx]))
    semi_minor = math.sqrt(float(axes_sq[1 - major_idx]))

    if abs(semi_major - semi_minor) <= CIRCLE_REL_TOL * semi_major:
        return EllipseParams(center=(xc, yc), a=semi_major, b=semi_minor, theta=0.0, circle=True)
    theta = math.atan2(float(vec[1, major_idx]), float(vec[0, major_idx])) % math.pi
    return EllipseParams(center=(xc, yc), a=semi_major, b=semi_minor, theta=theta)


def params_to_conic(params: EllipseParams) -> np.ndarray:
    """Geometric parameters to conic coefficients (F scaled so RHS is 0)."""
    xc, yc = params.center
    ct, st = math.cos(params.theta), math.sin(params.theta)
    ia2 = 1.0 / params.a**2
    ib2 = 1.0 / params.b**2
    a = ct * ct * ia2 + st * st * ib2
    b = 2.0 * ct * st * (ia2 - ib2)
    c = st * st * ia2 + ct * ct * ib2
    d = -2.0 * a * xc - b * yc
    e = -b * xc - 2.0 * c * yc
    f = a * xc * xc + b * xc * yc + c * yc * yc - 1.0
    return np.array([a, b, c, d, e, f])


def scale_ellipse(params: EllipseParams, sx: float, sy: float) -> EllipseParams:
    """Exact ellipse parameters after scaling coordinates by (sx, sy)."""
    if sx == sy:
        return EllipseParams(
            center=(params.center[0] * sx, params.center[1] * sy),
            a=params.a * sx,
            b=params.b * sx,
            theta=params.theta,
            circle=params.circle,
        )
    a, b, c, d, e, f = params_to_conic(params)
    scaled = np.array([a / sx**2, b / (sx * sy), c / sy**2, d / sx, e / sy, f])
    return conic_to_params(scaled)


def ellipse_from_contour(contour: np.ndarray) -> tuple[EllipseParams, FitQuality]:
    """Fit an ellipse to a traced contour's (col, row) points."""
    return fit_ellipse(np.asarray(contour, dtype=float))


def rasterize_ellipse(params: EllipseParams, width: int, height: int) -> np.ndarray:
    """Pixel-center rasterization: foreground where the center satisfies
    the interior inequality.  Fully off-canvas ellipses give an empty mask.
    """
    if width < 1 or height < 1:
        raise ValueError("canvas must be positive")
    cols, rows = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    return ellipse_interior(params, cols, rows)


def ellipse_interior(params: EllipseParams, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Interior test (<= 1 on the normalized quadratic form) for arrays of points."""
    dx = x - params.center[0]
    dy = y - params.center[1]
    ct, st = math.cos(params.theta), math.sin(params.theta)
    u = dx * ct + dy * st
    v = -dx * st + dy * ct
    return (u / params.a) ** 2 + (v / params.b) ** 2 <= 1.0


def sample_ellipse(params: EllipseParams, count: int, phase: float = 0.0) -> np.ndarray:
    """Exact parametric samples, (count, 2) (x, y) array."""
    t = phase + 2.0 * math.pi * np.arange(count) / count
    ct, st = math.cos(params.theta), math.sin(params.theta)
    u = params.a * np.cos(t)
    v = params.b * np.sin(t)
    return np.column_stack(
        [params.center[0] + u * ct - v * st, params.center[1] + u * st + v * ct]
    )
