"""SVG line plots of sweep trends (matplotlib, non-interactive backend)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# 800 x 600 points at 72 dpi gives an SVG viewBox of 0 0 800 600.
FIGSIZE = (800 / 72, 600 / 72)

EPS_PLOTS = (
    ("mu", "mu", "discrete eigenvalue mu"),
    ("dn_distance", "dn_distance", "||Lambda - |d/dphi| ||  (H^1 -> L^2)"),
    ("geo_bound", "geo_bound", "pi / m  (bound on boundary-class geodesic)"),
    ("abs_beta", "beta", "|beta|"),
)
MU_PLOTS = (
    ("dn_distance", "dn_distance", "||Lambda - |d/dphi| ||  (H^1 -> L^2)"),
    ("abs_beta", "beta", "|beta|"),
)


def _series(reports, x, column):
    pts = []
    for r in reports:
        xv, yv = getattr(r, x), getattr(r, column)
        if column == "beta":
            yv = abs(yv)
        if not r.failed and math.isfinite(xv) and math.isfinite(yv):
            pts.append((xv, yv))
    return sorted(pts)


def line_plot(path, xs, ys, xlabel, ylabel, title, logx=True):
    """Write one deterministic SVG line plot."""
    with plt.rc_context({"svg.hashsalt": "dndegen", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=FIGSIZE, dpi=72)
        ax.plot(xs, ys, marker="o")
        if logx:
            ax.set_xscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.grid(True, which="both", alpha=0.3)
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return Path(path)


def plot_sweep(reports, out_dir, x="eps"):
    """One SVG per trend next to the report CSV; returns the written paths."""
    out_dir = Path(out_dir)
    specs = EPS_PLOTS if x == "eps" else MU_PLOTS
    files = []
    for stem, column, label in specs:
        pts = _series(reports, x, column)
        if not pts:
            continue
        xs, ys = zip(*pts)
        name = f"{stem}_vs_{x}.svg"
        files.append(line_plot(out_dir / name, xs, ys, x, label, f"{label} vs {x}", logx=(x == "eps")))
    return files
