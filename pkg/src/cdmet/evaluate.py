"""IoU evaluation, batch summaries, CD correlation, and contour overlays."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .raster import DEFAULT_THRESHOLD, binarize, extract_class, load_gray, load_labels


@dataclass(frozen=True)
class IouRecord:
    image_id: str
    class_id: int
    intersection: int
    union: int
    iou: float
    vacuous: bool = False  # both masks empty; IoU defined as 1.0


@dataclass
class BatchSummary:
    """Per-class order statistics of IoU scores.

    Quartiles use linear interpolation between order statistics (numpy's
    default percentile method), so q1 of [0.2, 0.4, 0.6, 0.8] is 0.35.
    """

    per_class: dict[int, dict[str, float]] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {str(k): dict(v) for k, v in sorted(self.per_class.items())}


@dataclass(frozen=True)
class CorrelationReport:
    cd_name: str
    n: int
    slope: float
    intercept: float
    r_squared: float
    mean_abs_error: float
    unmatched_manual: tuple[str, ...] = ()
    unmatched_extracted: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "cd_name": self.cd_name,
            "n": self.n,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "mean_abs_error_nm": self.mean_abs_error,
            "unmatched_manual": list(self.unmatched_manual),
            "unmatched_extracted": list(self.unmatched_extracted),
        }


def iou(
    pred: np.ndarray,
    truth: np.ndarray,
    image_id: str = "",
    class_id: int = 0,
) -> IouRecord:
    """Pixelwise intersection over union of two equal-size binary masks.

    Empty-vs-empty is defined as IoU 1.0 with the ``vacuous`` flag set (an
    absent class correctly predicted absent).
    """
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise ValueError(f"mask dimensions differ: {pred.shape} vs {truth.shape}")
    inter = int(np.count_nonzero(pred & truth))
    union = int(np.count_nonzero(pred | truth))
    if union == 0:
        return IouRecord(image_id, class_id, 0, 0, 1.0, vacuous=True)
    return IouRecord(image_id, class_id, inter, union, inter / union)


def summarize(records: list[IouRecord]) -> BatchSummary:
    summary = BatchSummary()
    by_class: dict[int, list[float]] = {}
    for rec in records:
        by_class.setdefault(rec.class_id, []).append(rec.iou)
    for class_id, values in by_class.items():
        arr = np.asarray(values)
        q1, median, q3 = np.percentile(arr, [25.0, 50.0, 75.0])
        summary.per_class[class_id] = {
            "count": int(arr.size),
            "min": float(arr.min()),
            "q1": float(q1),
            "median": float(median),
            "q3": float(q3),
            "max": float(arr.max()),
            "mean": float(arr.mean()),
        }
    return summary


def _load_pair_mask(path: str | Path, class_id: int, threshold: int) -> np.ndarray:
    if class_id >= 1:
        return extract_class(load_labels(path), class_id)
    return binarize(load_gray(path), threshold)


def iou_batch(
    pairs: list[tuple[str | Path, str | Path, int]],
    threshold: int = DEFAULT_THRESHOLD,
) -> tuple[list[IouRecord], BatchSummary, list[str]]:
    """Evaluate (pred, truth, class) mask pairs.

    Class id 0 treats the files as binary masks; ids >= 1 extract that
    class from label masks.  Unreadable or mismatched pairs are reported in
    the returned error list and the batch continues.
    """
    records: list[IouRecord] = []
    errors: list[str] = []
    for pred_path, truth_path, class_id in pairs:
        image_id = Path(pred_path).stem
        try:
            pred = _load_pair_mask(pred_path, class_id, threshold)
            truth = _load_pair_mask(truth_path, class_id, threshold)
            records.append(iou(pred, truth, image_id=image_id, class_id=class_id))
        except (OSError, ValueError) as exc:
            errors.append(f"{pred_path}: {exc}")
    return records, summarize(records), errors


def correlate(
    manual: list[tuple[str, float]],
    extracted: list[tuple[str, float]],
    cd_name: str = "",
) -> CorrelationReport:
    """OLS regression of extracted = slope * manual + intercept over matched ids."""
    manual_map = dict(manual)
    extracted_map = dict(extracted)
    if len(manual_map) != len(manual) or len(extracted_map) != len(extracted):
        raise ValueError("duplicate ids in correlation input")
    ids = [i for i in manual_map if i in extracted_map]
    unmatched_manual = tuple(i for i in manual_map if i not in extracted_map)
    unmatched_extracted = tuple(i for i in extracted_map if i not in manual_map)
    if len(ids) < 2:
        raise ValueError(f"insufficient pairs: {len(ids)} matched ids")

    x = np.array([manual_map[i] for i in ids], dtype=float)
    y = np.array([extracted_map[i] for i in ids], dtype=float)
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0.0:
        raise ValueError("degenerate regression: manual values have zero variance")
    sxy = float(np.sum((x - x.mean()) * (y - y.mean())))
    slope = sxy / sxx
    intercept = float(y.mean() - slope * x.mean())
    syy = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if syy == 0.0 else (sxy * sxy) / (sxx * syy)
    return CorrelationReport(
        cd_name=cd_name,
        n=len(ids),
        slope=slope,
        intercept=intercept,
        r_squared=r_squared,
        mean_abs_error=float(np.mean(np.abs(y - x))),
        unmatched_manual=unmatched_manual,
        unmatched_extracted=unmatched_extracted,
    )


def overlay(
    img: np.ndarray,
    contours: list[np.ndarray],
    color: tuple[int, int, int] = (255, 0, 0),
) -> np.ndarray:
    """Paint contour points onto a grayscale image expanded to RGB."""
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError("overlay expects a 2-D grayscale image")
    out = np.repeat(img[:, :, None], 3, axis=2)
    h, w = img.shape
    for contour in contours:
        for col, row in np.asarray(contour).reshape(-1, 2):
            col, row = int(col), int(row)
            if not (0 <= col < w and 0 <= row < h):
                raise ValueError(f"contour point ({col}, {row}) outside image {w}x{h}")
            out[row, col] = color
    return out
