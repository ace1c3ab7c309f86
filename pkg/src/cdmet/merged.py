"""Per-unit ellipse recovery from merged 2-D grating masks.

Two reconstruction paths:

* columnar chains: the left/right side profiles of each merged column are
  fitted with cosines; side samples between consecutive supported crest
  rows (inward pinches at unit junctions) form one prospective ellipse's
  left and right arcs.
* dog-bone islands: residue components on a rectangular lattice; the four
  corner components of each lattice cell contribute the facing arcs of the
  ellipse centered in that cell.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .ellipse import EllipseParams, FitQuality, ellipse_from_contour, fit_ellipse
from .raster import Component, clean, connected_components, trace_contour
from .srg import Calibration

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ColumnSides:
    """Per-row extreme columns of one component (rows strictly increasing)."""

    rows: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def left_samples(self) -> np.ndarray:
        """(N, 2) array of (row, col) samples for the left side."""
        return np.column_stack([self.rows, self.left]).astype(float)

    @property
    def right_samples(self) -> np.ndarray:
        return np.column_stack([self.rows, self.right]).astype(float)


@dataclass(frozen=True)
class CosineFit:
    """col(row) = amplitude * cos(2*pi*row/period + phase) + offset."""

    amplitude: float
    period: float
    phase: float
    offset: float
    rms_residual: float
    iterations: int
    cost_history: tuple[float, ...]  # accepted-step costs, non-increasing

    def value(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        return self.amplitude * np.cos(TWO_PI * rows / self.period + self.phase) + self.offset


@dataclass(frozen=True)
class Arc:
    side: str  # left / right / top / bottom
    points: np.ndarray  # (N, 2) float (col, row)


@dataclass(frozen=True)
class ArcBundle:
    arcs: tuple[Arc, ...]
    source_unit_id: int

    @property
    def all_points(self) -> np.ndarray:
        return np.vstack([a.points for a in self.arcs if a.points.size])


@dataclass(frozen=True)
class DogboneGroup:
    """Four lattice-cell corner components; labels follow reading order of
    the arcs they contribute: left=NW, top=NE, right=SE, bottom=SW."""

    left: Component
    top: Component
    right: Component
    bottom: Component
    cell: tuple[int, int]


@dataclass(frozen=True)
class UnitFit:
    """One recovered unit ellipse with its provenance."""

    params: EllipseParams
    quality: FitQuality
    component: int | None = None
    bundle: int | None = None
    cell: tuple[int, int] | None = None


def column_sides(mask: np.ndarray, comp: Component) -> ColumnSides:
    """Leftmost/rightmost foreground column of the component at every row."""
    c0, r0, _, _ = comp.bbox
    patch = comp.patch
    any_row = patch.any(axis=1)
    rows = np.nonzero(any_row)[0]
    left = np.argmax(patch[rows], axis=1)
    right = patch.shape[1] - 1 - np.argmax(patch[rows, ::-1], axis=1)
    return ColumnSides(rows=rows + r0, left=(left + c0).astype(float), right=(right + c0).astype(float))


# ---------------------------------------------------------------------------
# cosine fitting (damped least squares with analytic Jacobian)
# ---------------------------------------------------------------------------


def _init_cosine(rows: np.ndarray, cols: np.ndarray, noise_floor: float) -> tuple[float, float, float, float]:
    offset = float(cols.mean())
    amplitude = float(cols.max() - cols.min()) / 2.0
    if amplitude < noise_floor:
        raise ValueError(f"no oscillation: amplitude {amplitude:.3g} px below noise floor {noise_floor:g}")

    y = cols - offset
    acf = np.correlate(y, y, mode="full")[y.size - 1 :]
    negatives = np.nonzero(acf < 0.0)[0]
    if negatives.size == 0:
        raise ValueError("insufficient periods: autocorrelation never crosses zero")
    k0 = int(negatives[0])
    peak = k0 + int(np.argmax(acf[k0:]))
    if acf[peak] <= 0.0:
        raise ValueError("insufficient periods: no positive autocorrelation peak")
    spacing = float(np.median(np.diff(rows))) if rows.size > 1 else 1.0
    period = peak * spacing
    if rows[-1] - rows[0] < 1.5 * period:
        raise ValueError("insufficient periods: need 1.5 periods of samples")

    u = min(1.0, max(-1.0, y[0] / amplitude))
    base = math.acos(u)
    slope = cols[min(1, cols.size - 1)] - cols[0]
    arg0 = -base if slope > 0 else base
    phase = arg0 - TWO_PI * rows[0] / period
    return amplitude, period, phase, offset


def fit_cosine(
    samples: np.ndarray,
    noise_floor: float = 1.0,
    max_iter: int = 200,
    rtol: float = 1e-10,
) -> CosineFit:
    """Levenberg-Marquardt cosine fit of (row, col) samples.

    Initialization: offset from the sample mean, amplitude from half the
    range, period from the dominant autocorrelation lag, phase from the
    first sample's residual phase.  Accepted steps never increase the cost;
    the fit converges when the relative cost change drops below ``rtol``.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"samples must be (N, 2) (row, col), got shape {pts.shape}")
    if pts.shape[0] < 8:
        raise ValueError(f"insufficient periods: need at least 8 samples, got {pts.shape[0]}")
    order = np.argsort(pts[:, 0], kind="stable")
    rows = pts[order, 0]
    cols = pts[order, 1]

    theta = np.array(_init_cosine(rows, cols, noise_floor))

    def residual(p: np.ndarray) -> np.ndarray:
        amp, per, phase, off = p
        return amp * np.cos(TWO_PI * rows / per + phase) + off - cols

    err = residual(theta)
    cost = float(err @ err)
    history = [cost]
    lam = 1e-3
    converged = cost == 0.0

    for _ in range(max_iter):
        if converged:
            break
        amp, per, phase, _ = theta
        arg = TWO_PI * rows / per + phase
        sin_arg = np.sin(arg)
        jac = np.column_stack(
            [
                np.cos(arg),
                amp * sin_arg * TWO_PI * rows / per**2,
                -amp * sin_arg,
                np.ones_like(rows),
            ]
        )
        hess = jac.T @ jac
        grad = jac.T @ err
        damped = hess + lam * (np.diag(np.diag(hess)) + 1e-12 * np.eye(4))
        try:
            step = np.linalg.solve(damped, -grad)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        trial = theta + step
        trial_err = residual(trial)
        trial_cost = float(trial_err @ trial_err)
        if trial_cost <= cost:
            converged = cost - trial_cost <= rtol * max(cost, 1e-300) or trial_cost == 0.0
            theta, err, cost = trial, trial_err, trial_cost
            history.append(cost)
            lam = max(lam / 3.0, 1e-12)
        else:
            lam *= 10.0
            if lam > 1e15:
                break

    if not converged:
        rms = math.sqrt(cost / rows.size)
        raise ValueError(f"cosine fit failed: rms residual {rms:.6g} after {max_iter} iterations")

    amp, per, phase, off = (float(v) for v in theta)
    per = abs(per)
    if amp < 0:
        amp, phase = -amp, phase + math.pi
    phase = phase % TWO_PI
    return CosineFit(
        amplitude=amp,
        period=per,
        phase=phase,
        offset=off,
        rms_residual=math.sqrt(cost / rows.size),
        iterations=len(history) - 1,
        cost_history=tuple(history),
    )


def extrema_rows(
    fit: CosineFit, row_range: tuple[float, float]
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic crest (cos = +1) and trough (cos = -1) rows within a range.

    Crests are column maxima of the fitted side; which geometric feature
    that is (inward pinch on the left side, outward bulge on the right) is
    the caller's concern.
    """
    lo, hi = row_range
    if hi < lo:
        raise ValueError("row range must be (lo, hi) with lo <= hi")

    def lattice(shift: float) -> np.ndarray:
        # rows where 2*pi*row/P + phase = shift (mod 2*pi)
        base = (shift - fit.phase) / TWO_PI
        k0 = math.ceil(lo / fit.period - base - 1e-9)
        k1 = math.floor(hi / fit.period - base + 1e-9)
        return np.array([(base + k) * fit.period for k in range(k0, k1 + 1)])

    return lattice(0.0), lattice(math.pi)


def _wrap_pi(x: float) -> float:
    return (x + math.pi) % TWO_PI - math.pi


def pair_column_arcs(
    sides: ColumnSides,
    left_fit: CosineFit,
    right_fit: CosineFit,
    registration_tol: float = 0.25,
) -> list[ArcBundle]:
    """Assemble per-unit arc bundles between consecutive left-side crests.

    Left crests (inward pinches) delimit one unit; the matching right-side
    delimiters are the nearest troughs, which sit half a period away in
    phase.  A crest is only a delimiter if samples cover a quarter period
    on both of its flanks; partial stubs at the component tips are
    discarded.  Registration errors out when the side phases deviate from
    the half-period offset by more than ``registration_tol`` of a period.
    """
    period = 0.5 * (left_fit.period + right_fit.period)
    phase_gap = abs(_wrap_pi(left_fit.phase - right_fit.phase))
    deviation = abs(phase_gap - math.pi) / TWO_PI  # in periods
    if deviation > registration_tol:
        raise ValueError(
            f"sides out of registration: phase offset deviates {deviation:.2f} periods from half-period"
        )

    lo = float(sides.rows[0])
    hi = float(sides.rows[-1])
    margin = period / 4.0
    crests, _ = extrema_rows(left_fit, (lo + margin, hi - margin))
    if crests.size < 2:
        warnings.warn("no full bundles: fewer than two supported crest rows", stacklevel=2)
        return []
    _, troughs = extrema_rows(right_fit, (lo - period / 2.0, hi + period / 2.0))
    if troughs.size == 0:
        warnings.warn("no full bundles: right side has no trough rows", stacklevel=2)
        return []

    def right_delimiter(crest: float) -> float:
        u = float(troughs[np.argmin(np.abs(troughs - crest))])
        if abs(u - crest) > period / 4.0:
            raise ValueError(
                f"sides out of registration: no right trough within a quarter period of row {crest:.1f}"
            )
        return min(max(u, lo), hi)

    bundles = []
    for k in range(crests.size - 1):
        c0, c1 = crests[k], crests[k + 1]
        u0, u1 = right_delimiter(c0), right_delimiter(c1)
        lsel = (sides.rows >= c0) & (sides.rows <= c1)
        rsel = (sides.rows >= u0) & (sides.rows <= u1)
        left_pts = np.column_stack([sides.left[lsel], sides.rows[lsel]]).astype(float)
        right_pts = np.column_stack([sides.right[rsel], sides.rows[rsel]]).astype(float)
        if left_pts.shape[0] + right_pts.shape[0] < 6:
            warnings.warn(f"bundle {k} skipped: fewer than 6 samples", stacklevel=2)
            continue
        bundles.append(
            ArcBundle(arcs=(Arc("left", left_pts), Arc("right", right_pts)), source_unit_id=k)
        )
    return bundles


def fit_merged_column(
    mask: np.ndarray,
    calib: Calibration = Calibration(),
    min_area: int = 0,
    noise_floor: float = 1.0,
) -> list[UnitFit]:
    """Recover unit ellipses of merged columns, top-to-bottom per column.

    Components whose sides do not oscillate (isolated units) fall back to a
    plain contour fit with a warning.  Per-bundle fit failures are warned
    and skipped; the call fails only if nothing can be fitted at all.
    """
    cleaned = clean(mask, min_area)
    comps = connected_components(cleaned, connectivity=8)
    if not comps:
        raise ValueError("no components found")
    comps.sort(key=lambda c: c.centroid[0])

    units: list[UnitFit] = []
    failures: list[str] = []
    for comp in comps:
        sides = column_sides(cleaned, comp)
        try:
            left_fit = fit_cosine(sides.left_samples, noise_floor=noise_floor)
            right_fit = fit_cosine(sides.right_samples, noise_floor=noise_floor)
        except ValueError as exc:
            warnings.warn(
                f"component {comp.id} not merged; use ellipse_from_contour ({exc})",
                stacklevel=2,
            )
            try:
                params, quality = ellipse_from_contour(trace_contour(cleaned, comp))
                units.append(UnitFit(params=params, quality=quality, component=comp.id, bundle=None))
            except ValueError as fit_exc:
                failures.append(f"component {comp.id}: {fit_exc}")
            continue
        try:
            bundles = pair_column_arcs(sides, left_fit, right_fit)
        except ValueError as exc:
            failures.append(f"component {comp.id}: {exc}")
            continue
        for bundle in bundles:
            try:
                params, quality = fit_ellipse(bundle.all_points)
            except ValueError as exc:
                failures.append(f"component {comp.id} bundle {bundle.source_unit_id}: {exc}")
                continue
            units.append(
                UnitFit(
                    params=params,
                    quality=quality,
                    component=comp.id,
                    bundle=bundle.source_unit_id,
                )
            )

    if not units:
        detail = "; ".join(failures) if failures else "no bundles produced"
        raise ValueError(f"no unit ellipses recovered: {detail}")
    for message in failures:
        warnings.warn(message, stacklevel=2)
    return units


# ---------------------------------------------------------------------------
# dog-bone islands
# ---------------------------------------------------------------------------


def _axis_pitch(centroids: np.ndarray, axis: int) -> float:
    """Median nearest-neighbor offset along one axis (0=col, 1=row)."""
    other = 1 - axis
    offsets = []
    for k in range(centroids.shape[0]):
        d = centroids - centroids[k]
        sel = (d[:, axis] > 0) & (d[:, axis] >= 2.0 * np.abs(d[:, other]))
        if not np.any(sel):
            continue
        offsets.append(float(d[sel, axis].min()))
    if not offsets:
        raise ValueError("no lattice: no neighbors along axis")
    med = float(np.median(offsets))
    mad = float(np.median(np.abs(np.asarray(offsets) - med)))
    if med <= 0 or mad > 0.25 * med:
        raise ValueError(f"no lattice: pitch spread {mad:.1f} exceeds 25% of median {med:.1f}")
    return med


def group_dogbones(comps: list[Component], mask: np.ndarray) -> list[DogboneGroup]:
    """Group lattice-cell corner components, one group per interior cell.

    Components may belong to up to four groups.  Raises ``no lattice`` when
    fewer than 4 components exist or centroids do not sit on a consistent
    rectangular grid.
    """
    if len(comps) < 4:
        raise ValueError(f"no lattice: need at least 4 components, got {len(comps)}")
    centroids = np.array([c.centroid for c in comps])  # (col, row)
    col_pitch = _axis_pitch(centroids, axis=0)
    row_pitch = _axis_pitch(centroids, axis=1)

    col0 = float(centroids[:, 0].min())
    row0 = float(centroids[:, 1].min())
    nodes: dict[tuple[int, int], Component] = {}
    for comp, (ccol, crow) in zip(comps, centroids):
        j = round((ccol - col0) / col_pitch)
        i = round((crow - row0) / row_pitch)
        if (
            abs(ccol - (col0 + j * col_pitch)) > 0.25 * col_pitch
            or abs(crow - (row0 + i * row_pitch)) > 0.25 * row_pitch
        ):
            raise ValueError(f"no lattice: component {comp.id} is off-grid")
        if (i, j) in nodes:
            raise ValueError(f"no lattice: duplicate node ({i}, {j})")
        nodes[(i, j)] = comp

    groups = []
    for i, j in sorted(nodes):
        corners = [(i, j), (i, j + 1), (i + 1, j + 1), (i + 1, j)]
        if all(c in nodes for c in corners):
            groups.append(
                DogboneGroup(
                    left=nodes[(i, j)],
                    top=nodes[(i, j + 1)],
                    right=nodes[(i + 1, j + 1)],
                    bottom=nodes[(i + 1, j)],
                    cell=(i, j),
                )
            )
    if not groups:
        raise ValueError("no lattice: no complete cells")
    return groups


def _facing_samples(
    comp: Component, window: tuple[int, int, int, int], facing: str
) -> np.ndarray:
    """Extreme-coordinate samples of a component inside the window.

    ``facing`` picks the boundary: 'right' = per-row max col, 'left' =
    per-row min col, 'down' = per-col max row, 'up' = per-col min row.
    Window is (col_lo, row_lo, col_hi, row_hi), inclusive.
    """
    wc0, wr0, wc1, wr1 = window
    c0, r0, c1, r1 = comp.bbox
    rc0, rr0 = max(wc0, c0), max(wr0, r0)
    rc1, rr1 = min(wc1, c1), min(wr1, r1)
    if rc1 < rc0 or rr1 < rr0:
        return np.empty((0, 2))
    sub = comp.patch[rr0 - r0 : rr1 - r0 + 1, rc0 - c0 : rc1 - c0 + 1]

    pts = []
    if facing in ("left", "right"):
        for rr in range(sub.shape[0]):
            cols = np.nonzero(sub[rr])[0]
            if cols.size:
                col = cols.max() if facing == "right" else cols.min()
                pts.append((rc0 + col, rr0 + rr))
    else:
        for cc in range(sub.shape[1]):
            rows = np.nonzero(sub[:, cc])[0]
            if rows.size:
                row = rows.max() if facing == "down" else rows.min()
                pts.append((rc0 + cc, rr0 + row))
    return np.array(pts, dtype=float).reshape(-1, 2)


def arcs_from_group(group: DogboneGroup, mask: np.ndarray) -> ArcBundle:
    """Four facing arcs restricted to the cell's central window."""
    cents = np.array(
        [group.left.centroid, group.top.centroid, group.right.centroid, group.bottom.centroid]
    )
    wc0 = int(math.ceil(cents[:, 0].min()))
    wc1 = int(math.floor(cents[:, 0].max()))
    wr0 = int(math.ceil(cents[:, 1].min()))
    wr1 = int(math.floor(cents[:, 1].max()))
    window = (wc0, wr0, wc1, wr1)

    arcs = (
        Arc("left", _facing_samples(group.left, window, "right")),
        Arc("top", _facing_samples(group.top, window, "down")),
        Arc("right", _facing_samples(group.right, window, "left")),
        Arc("bottom", _facing_samples(group.bottom, window, "up")),
    )
    total = sum(a.points.shape[0] for a in arcs)
    if total < 6:
        raise ValueError(f"arcs empty: only {total} samples in the central window")
    return ArcBundle(arcs=arcs, source_unit_id=group.cell[0])


def fit_island_ellipses(
    mask: np.ndarray,
    calib: Calibration = Calibration(),
    min_area: int = 0,
) -> list[UnitFit]:
    """One recovered ellipse per interior lattice cell, row-major order."""
    cleaned = clean(mask, min_area)
    comps = connected_components(cleaned, connectivity=8)
    groups = group_dogbones(comps, cleaned)

    units = []
    failures = []
    for group in groups:
        try:
            bundle = arcs_from_group(group, cleaned)
            params, quality = fit_ellipse(bundle.all_points)
        except ValueError as exc:
            failures.append(f"cell {group.cell}: {exc}")
            continue
        units.append(UnitFit(params=params, quality=quality, cell=group.cell))
    if not units:
        raise ValueError("no cell produced an ellipse fit: " + "; ".join(failures))
    for message in failures:
        warnings.warn(message, stacklevel=2)
    return units
