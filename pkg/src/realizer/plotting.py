"""Paired FIT scatter plots (method A vs method B against the bisector)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SIDE_PX = 640
DPI = 72

# fixed ids and no timestamp so repeated runs write identical files
plt.rcParams["svg.hashsalt"] = "realizer"
plt.rcParams["svg.fonttype"] = "none"


def paired_fits(records, method_x: str, method_y: str, system_id: str | None = None):
    """Arrays of paired FIT values, skipping trials where either method failed."""
    xs, ys = [], []
    for r in records:
        if system_id is not None and r.system_id != system_id:
            continue
        if method_x in r.failures or method_y in r.failures:
            continue
        xs.append(r.fits[method_x])
        ys.append(r.fits[method_y])
    return np.array(xs, dtype=float), np.array(ys, dtype=float)


def scatter_svg(x, y, path, xlabel: str, ylabel: str, title: str = "",
                lims: tuple = (-100.0, 100.0)) -> int:
    """Write a square scatter of ``y`` against ``x`` with the bisector line.

    Points outside ``lims`` are clipped onto the border so catastrophic
    fits remain visible. Returns the number of clipped points.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo, hi = lims
    xc, yc = np.clip(x, lo, hi), np.clip(y, lo, hi)
    clipped = int(np.sum((xc != x) | (yc != y)))

    side = SIDE_PX / DPI
    fig, ax = plt.subplots(figsize=(side, side), dpi=DPI)
    ax.plot([lo, hi], [lo, hi], color="k", lw=1.0, label="bisector")
    ax.scatter(xc, yc, s=12, marker="o", facecolors="none", edgecolors="tab:blue")
    ax.set_xlim(lo, hi)
    ax.set_ylim(lo, hi)
    ax.set_aspect("equal")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if clipped:
        ax.text(0.02, 0.98, f"{clipped} point(s) clipped to [{lo:g}, {hi:g}]",
                transform=ax.transAxes, va="top", fontsize=8)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return clipped
