"""Matplotlib figures for flows and harness summaries.

Edges are drawn with width proportional to C(|m|), terminals as filled discs
with area proportional to |mass| (sources and sinks in different colours), and
branching points as hollow circles.  SVG output is made reproducible by fixing
the hash salt and dropping the date stamp.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .cost import CostSpec, eval_cost  # noqa: E402
from .flow import BRANCHING, Flow, Instance  # noqa: E402

SOURCE_COLOR = "#c0392b"
SINK_COLOR = "#2c7fb8"
EDGE_COLOR = "#333333"

_RC = {
    "svg.hashsalt": "gilbert-steiner",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.titlesize": 10,
}


def save_figure(fig, path) -> Path:
    path = Path(path)
    fmt = path.suffix.lstrip(".").lower() or "svg"
    metadata = {"Date": None} if fmt in ("svg", "pdf") else None
    with plt.rc_context(_RC):
        fig.savefig(path, format=fmt, metadata=metadata, bbox_inches="tight")
    plt.close(fig)
    return path


def draw_flow(ax, flow: Flow, cost: CostSpec, masses: dict, axes=(0, 1), labels: bool = False):
    """Draw ``flow`` on ``ax`` using the coordinate ``axes`` pair."""
    i, j = axes
    widths = {e: eval_cost(cost, abs(e.mass)) for e in flow.edges}
    wmax = max(widths.values(), default=1.0) or 1.0
    for e in flow.edges:
        a, b = flow.position(e.u), flow.position(e.v)
        ax.plot([a[i], b[i]], [a[j], b[j]], color=EDGE_COLOR, lw=0.6 + 4.0 * widths[e] / wmax,
                solid_capstyle="round", zorder=1)
    mmax = max((abs(m) for m in masses.values()), default=1.0)
    for v in flow.vertices:
        p = v.position
        if v.kind == BRANCHING:
            ax.scatter([p[i]], [p[j]], s=30, facecolors="white", edgecolors=EDGE_COLOR, linewidths=1.2, zorder=3)
        else:
            m = masses.get(v.id, 0.0)
            ax.scatter([p[i]], [p[j]], s=40 + 160 * abs(m) / mmax, color=SOURCE_COLOR if m > 0 else SINK_COLOR,
                       zorder=2)
        if labels:
            ax.annotate(v.id, (p[i], p[j]), textcoords="offset points", xytext=(4, 4), fontsize=7)
    ax.set_aspect("equal", adjustable="datalim")
    ax.margins(0.12)


def render_flow(flow: Flow, instance: Instance, path, labels: bool = False, title: Optional[str] = None) -> Path:
    """Planar picture, or three coordinate projections for flows in space."""
    masses = instance.masses
    with plt.rc_context(_RC):
        if instance.dimension == 2:
            fig, ax = plt.subplots(figsize=(4.5, 4.5))
            draw_flow(ax, flow, instance.cost, masses, labels=labels)
            ax.set_xticks([])
            ax.set_yticks([])
            if title:
                ax.set_title(title)
        else:
            fig, axs = plt.subplots(1, 3, figsize=(11, 4))
            for ax, pair, name in zip(axs, ((0, 1), (0, 2), (1, 2)), ("x-y", "x-z", "y-z")):
                draw_flow(ax, flow, instance.cost, masses, axes=pair, labels=labels)
                ax.set_title(name)
                ax.set_xticks([])
                ax.set_yticks([])
            if title:
                fig.suptitle(title)
    return save_figure(fig, path)


def render_harness(rows: Sequence[dict], path) -> Path:
    """Competitor gap of every harness instance, coloured by the cost exponent."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ps = sorted({r["p"] for r in rows})
        cmap = plt.get_cmap("viridis")
        for k, p in enumerate(ps):
            sel = [r for r in rows if r["p"] == p]
            idx = [r["index"] for r in sel]
            gaps = [max(r["competitor_gap"], 1e-16) if r["competitor_gap"] is not None else np.nan for r in sel]
            ax.scatter(idx, gaps, s=14, color=cmap(k / max(len(ps) - 1, 1)), label=f"p = {p}")
        ax.set_yscale("log")
        ax.set_xlabel("instance")
        ax.set_ylabel("second best minus best")
        ax.legend(frameon=False, fontsize=7)
    return save_figure(fig, path)
