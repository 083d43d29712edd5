"""Report figures written next to the CLI's delimited outputs.

Figures are built with the object-oriented matplotlib API on an Agg canvas,
so nothing here touches pyplot's global state or needs a display.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .estimator import FrameGeometry
from .geometry import BBox
from .metrics import EvalReport

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}
# PNG metadata carries the matplotlib version by default; drop it so reruns match
_META = {"Software": None}


def _new(nrows: int = 1, ncols: int = 1, size=(6.4, 3.6)):
    fig = Figure(figsize=size, layout="constrained")
    FigureCanvasAgg(fig)
    axes = fig.subplots(nrows, ncols, squeeze=False)
    for ax in axes.flat:
        for key, val in STYLE.items():
            if key.startswith("axes.spines."):
                ax.spines[key.rsplit(".", 1)[1]].set_visible(val)
        ax.title.set_fontsize(STYLE["axes.titlesize"])
        ax.xaxis.label.set_fontsize(STYLE["axes.labelsize"])
        ax.yaxis.label.set_fontsize(STYLE["axes.labelsize"])
        ax.tick_params(labelsize=STYLE["font.size"])
    return fig, axes


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120, metadata=_META)
    return path


def plot_angles(geoms: Sequence[FrameGeometry], path, theta_star: float | None = None) -> Path:
    """Raw and smoothed elevation per frame, with fallback frames marked."""
    fig, axes = _new(2, 1, size=(6.4, 4.8))
    ax, ax_err = axes[:, 0]
    frames = np.array([g.frame for g in geoms])
    raw = np.degrees([g.theta_raw for g in geoms])
    smooth = np.degrees([g.theta for g in geoms])
    fb = np.array([g.used_fallback for g in geoms], dtype=bool)
    ax.plot(frames, raw, ".", ms=3, color="0.6", label="raw")
    ax.plot(frames, smooth, "-", lw=1.2, color="C0", label="smoothed")
    if fb.any():
        ax.plot(frames[fb], smooth[fb], "x", color="C3", label="fallback")
    if theta_star is not None:
        ax.axhline(math.degrees(theta_star), ls="--", lw=0.8, color="k", label="truth")
    ax.set_ylabel("elevation [deg]")
    ax.legend(loc="best", frameon=False)
    err = np.array([g.error for g in geoms], dtype=float)
    ax_err.semilogy(frames, np.maximum(err, 1e-18), "-", lw=0.8, color="C1")
    ax_err.set_xlabel("frame")
    ax_err.set_ylabel("objective")
    return _save(fig, path)


def plot_tracks(results: Mapping[int, Sequence[tuple[int, BBox]]], path, width=None, height=None) -> Path:
    """Image-plane trajectories of box bottom centers, one color per id."""
    fig, axes = _new(size=(6.4, 3.8))
    ax = axes[0, 0]
    paths: dict[int, list[tuple[float, float]]] = {}
    for frame in sorted(results):
        for tid, box in results[frame]:
            paths.setdefault(tid, []).append((box.x_center, box.bottom))
    for k, tid in enumerate(sorted(paths)):
        xy = np.array(paths[tid])
        ax.plot(xy[:, 0], xy[:, 1], "-", lw=1.0, color=f"C{k % 10}")
        ax.annotate(str(tid), xy[-1], fontsize=7, color=f"C{k % 10}")
    if width is not None and height is not None:
        ax.set_xlim(0, width)
        ax.set_ylim(height, 0)
    else:
        ax.invert_yaxis()
    ax.set_aspect("equal", adjustable="box")
    ax.set_xlabel("u [px]")
    ax.set_ylabel("v [px]")
    ax.set_title(f"{len(paths)} tracks")
    return _save(fig, path)


def plot_eval(report: EvalReport, path) -> Path:
    """Per-frame error counts with the summary scores in the title."""
    fig, axes = _new(size=(6.4, 3.2))
    ax = axes[0, 0]
    frames = np.array([s.frame for s in report.frames])
    fp = np.array([s.fp for s in report.frames])
    fn = np.array([s.fn for s in report.frames])
    sw = np.array([s.idsw for s in report.frames])
    ax.bar(frames, fn, width=1.0, color="C0", label="FN")
    ax.bar(frames, fp, width=1.0, bottom=fn, color="C1", label="FP")
    ax.bar(frames, sw, width=1.0, bottom=fn + fp, color="C3", label="IDSw")
    ax.set_xlabel("frame")
    ax.set_ylabel("errors")
    ax.set_title(f"MOTA {report.mota:.3f}   IDF1 {report.idf1:.3f}")
    ax.legend(loc="best", frameon=False)
    return _save(fig, path)


def plot_scene(positions: np.ndarray, ids: Sequence[int], path) -> Path:
    """Ground-plane paths of a synthetic world (lateral vs forward meters)."""
    fig, axes = _new(size=(4.8, 4.8))
    ax = axes[0, 0]
    for k, oid in enumerate(ids):
        xy = positions[:, k]
        ax.plot(xy[:, 0], xy[:, 1], "-", lw=1.0, color=f"C{k % 10}")
        ax.plot(xy[0, 0], xy[0, 1], "o", ms=3, color=f"C{k % 10}")
    ax.plot([0], [0], "k^", ms=6)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("lateral [m]")
    ax.set_ylabel("forward [m]")
    return _save(fig, path)
