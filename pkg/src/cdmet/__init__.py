"""Critical-dimension metrology from segmentation masks."""

from .ellipse import EllipseParams, FitQuality, ellipse_from_contour, fit_ellipse, rasterize_ellipse
from .raster import (
    Component,
    binarize,
    clean,
    connected_components,
    extract_class,
    load_gray,
    load_labels,
    save_mask,
    trace_contour,
)
from .srg import Calibration, CdReport, extract_srg
from .transitions import Landmarks, TransitionPoint, find_transition_points, landmarks

__version__ = "0.1.0"

__all__ = [
    "Calibration",
    "CdReport",
    "Component",
    "EllipseParams",
    "FitQuality",
    "Landmarks",
    "TransitionPoint",
    "binarize",
    "clean",
    "connected_components",
    "ellipse_from_contour",
    "extract_class",
    "extract_srg",
    "find_transition_points",
    "fit_ellipse",
    "landmarks",
    "load_gray",
    "load_labels",
    "rasterize_ellipse",
    "save_mask",
    "trace_contour",
    "__version__",
]
