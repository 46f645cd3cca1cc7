"""Figures rendered next to the delimited outputs.

Uses the object-oriented Agg API so nothing touches pyplot global state.
PNG metadata is stripped to keep repeated runs byte-identical.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .evaluation import Histogram, PolicyComparison, TradeoffCurve
from .optimizer import CurvePoint

_METADATA = {"Software": None}


def _new(width=5.0, height=3.6):
    fig = Figure(figsize=(width, height), dpi=100)
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(Path(path), format="png", metadata=_METADATA)


def plot_tradeoff(curves: Sequence[TradeoffCurve], path, labels: Sequence[str] | None = None):
    """Accuracy against mean energy for one or more alpha sweeps."""
    fig, ax = _new()
    labels = labels or [c.mode.value for c in curves]
    for curve, label in zip(curves, labels):
        pts = sorted(curve.points, key=lambda p: p.mean_energy_mj)
        ax.plot([p.mean_energy_mj for p in pts], [p.accuracy for p in pts], marker="o", ms=3, label=label)
    base = curves[0]
    ax.scatter([base.baseline_m1.energy_mj], [base.baseline_m1.accuracy], c="k", marker="s", zorder=3)
    ax.scatter([base.baseline_m2.energy_mj], [base.baseline_m2.accuracy], c="k", marker="^", zorder=3)
    ax.annotate("M1", (base.baseline_m1.energy_mj, base.baseline_m1.accuracy),
                xytext=(4, -10), textcoords="offset points", fontsize=8)
    ax.annotate("M2", (base.baseline_m2.energy_mj, base.baseline_m2.accuracy),
                xytext=(4, 4), textcoords="offset points", fontsize=8)
    ax.set_xlabel("mean energy per input [mJ]")
    ax.set_ylabel("accuracy")
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(alpha=0.3)
    _save(fig, path)


def plot_histogram(hist: Histogram, path, class_label: str = ""):
    fig, ax = _new()
    edges = hist.bin_edges
    width = np.diff(edges)
    ax.bar(edges[:-1], hist.correct_counts, width=width, align="edge", color="tab:blue",
           alpha=0.7, label="stage 1 correct")
    ax.bar(edges[:-1], hist.incorrect_counts, width=width, align="edge", color="tab:red",
           alpha=0.7, label="stage 1 incorrect")
    ax.set_xlim(0, 1)
    ax.set_xlabel("stage-1 score margin")
    ax.set_ylabel("samples")
    if class_label:
        ax.set_title(f"predicted class {class_label}")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_objective_curve(points: Sequence[CurvePoint], alpha: float, path, class_label: str = ""):
    fig, ax = _new()
    th = [p.threshold for p in points]
    ax.step(th, [p.fp for p in points], where="post", label="false positives")
    ax.step(th, [alpha * p.escalations for p in points], where="post", label="alpha x escalations")
    ax.step(th, [p.total for p in points], where="post", label="objective", lw=2)
    best = next(p for p in points if p.is_argmin)
    ax.plot([best.threshold], [best.total], "ko")
    ax.set_xlim(0, 1)
    ax.set_xlabel("threshold")
    ax.set_ylabel("count")
    title = f"alpha = {alpha:g}"
    ax.set_title(f"class {class_label}, {title}" if class_label else title)
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_comparison(rows: Sequence[PolicyComparison], path):
    fig, ax = _new()
    x = np.arange(len(rows))
    pc = [np.nan if r.energy_per_class is None else r.energy_per_class for r in rows]
    gl = [np.nan if r.energy_global is None else r.energy_global for r in rows]
    ax.bar(x - 0.2, pc, width=0.4, label="per-class")
    ax.bar(x + 0.2, gl, width=0.4, label="single threshold")
    ax.set_xticks(x)
    ax.set_xticklabels([f"{100 * r.quantile:g}%" for r in rows])
    ax.set_xlabel("normalized accuracy gain over M1")
    ax.set_ylabel("mean energy per input [mJ]")
    ax.legend(fontsize=8)
    _save(fig, path)
