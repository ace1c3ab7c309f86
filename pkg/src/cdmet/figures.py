"""Matplotlib figures rendered next to the delimited reports.

All figures are written through :func:`save_figure`, which pins the PNG
metadata so repeated runs produce byte-identical files.
"""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_PNG_METADATA = {"Software": "cdmet"}
_DPI = 110


def save_figure(fig, path: str | Path) -> None:
    fig.savefig(Path(path), dpi=_DPI, metadata=_PNG_METADATA)
    plt.close(fig)


def iou_boxplot(summary: dict[int, dict[str, float]], path: str | Path) -> None:
    """Box plot of per-class IoU from precomputed quartiles."""
    stats = []
    for class_id in sorted(summary):
        s = summary[class_id]
        stats.append(
            {
                "label": f"class {class_id}",
                "med": s["median"],
                "q1": s["q1"],
                "q3": s["q3"],
                "whislo": s["min"],
                "whishi": s["max"],
                "mean": s["mean"],
                "fliers": [],
            }
        )
    fig, ax = plt.subplots(figsize=(1.6 + 1.1 * len(stats), 3.6))
    ax.bxp(stats, showmeans=True, meanline=True)
    ax.set_ylabel("IoU")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    save_figure(fig, path)


def correlation_plot(
    manual: np.ndarray, extracted: np.ndarray, report, path: str | Path
) -> None:
    """Scatter of extracted vs manual values with the fitted line."""
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    ax.scatter(manual, extracted, s=14, alpha=0.75, edgecolors="none")
    lo = float(min(manual.min(), extracted.min()))
    hi = float(max(manual.max(), extracted.max()))
    pad = 0.05 * (hi - lo) if hi > lo else 1.0
    xs = np.array([lo - pad, hi + pad])
    ax.plot(xs, xs, color="0.6", lw=0.8, ls="--", label="identity")
    ax.plot(
        xs,
        report.slope * xs + report.intercept,
        color="crimson",
        lw=1.2,
        label=f"fit: y = {report.slope:.3f}x + {report.intercept:.2f}",
    )
    ax.set_xlabel(f"manual {report.cd_name} (nm)")
    ax.set_ylabel(f"extracted {report.cd_name} (nm)")
    ax.set_title(f"{report.cd_name}: r$^2$ = {report.r_squared:.4f}, n = {report.n}")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    save_figure(fig, path)


def srg_report_plot(report, path: str | Path) -> None:
    """Per-tooth mid thickness and slants plus the pitch sequence."""
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.4))
    ids = [t.tooth_id for t in report.teeth]
    axes[0].plot(ids, [t.mid_thickness for t in report.teeth], "o-", label="mid thickness (nm)")
    axes[0].set_xlabel("tooth")
    axes[0].set_ylabel("mid thickness (nm)")
    axes[0].grid(True, alpha=0.3)
    ax2 = axes[0].twinx()
    ax2.plot(ids, [t.left_slant for t in report.teeth], "s--", color="seagreen", label="left slant")
    ax2.plot(ids, [t.right_slant for t in report.teeth], "^--", color="darkorange", label="right slant")
    ax2.set_ylabel("slant (deg)")
    if report.pitches:
        axes[1].plot(range(len(report.pitches)), report.pitches, "o-")
    axes[1].set_xlabel("gap index")
    axes[1].set_ylabel("pitch (nm)")
    axes[1].set_title(f"etch depth = {report.etch_depth:.1f} nm")
    axes[1].grid(True, alpha=0.3)
    fig.tight_layout()
    save_figure(fig, path)


def fresnel_profile_plot(profile, report, path: str | Path) -> None:
    """Surface staircase with bin boundaries and the top reference line."""
    fig, ax = plt.subplots(figsize=(6.4, 3.2))
    cols = np.arange(profile.top_row.size)
    ax.plot(cols, profile.top_row, lw=1.0, color="navy")
    ax.axhline(report.top_reference_row, color="royalblue", lw=0.8, ls="--", label="top reference")
    for b in report.bins:
        ax.axvline(b["col_start"] - 0.5, color="0.75", lw=0.6)
        ax.axvline(b["col_end"] + 0.5, color="0.75", lw=0.6)
    ax.invert_yaxis()
    ax.set_xlabel("column (px)")
    ax.set_ylabel("surface row (px)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    save_figure(fig, path)


def ellipse_overlay_plot(mask: np.ndarray, ellipses: list, path: str | Path) -> None:
    """Fitted ellipse outlines over the mask silhouette."""
    fig, ax = plt.subplots(figsize=(4.6, 4.6))
    ax.imshow(mask, cmap="gray", interpolation="nearest")
    t = np.linspace(0.0, 2.0 * math.pi, 181)
    for params in ellipses:
        ct, st = math.cos(params.theta), math.sin(params.theta)
        u = params.a * np.cos(t)
        v = params.b * np.sin(t)
        ax.plot(
            params.center[0] + u * ct - v * st,
            params.center[1] + u * st + v * ct,
            color="crimson",
            lw=1.0,
        )
    ax.set_axis_off()
    fig.tight_layout()
    save_figure(fig, path)
