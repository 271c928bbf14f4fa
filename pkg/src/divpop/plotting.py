"""SVG figures: simplex trajectories, training curves and regret curves.

Artists carry ``gid`` attributes (``policy-path-<i>``, ``average-marker``,
``curve-<label>``) so tests can count them in the SVG markup.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SQRT3_2 = math.sqrt(3.0) / 2.0
TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, SQRT3_2]])

_RC = {
    "svg.hashsalt": "divpop",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}
_COLORS = plt.get_cmap("tab10").colors


def simplex_project(p) -> np.ndarray:
    """Barycentric map of a 3-state distribution onto the equilateral triangle
    with vertices (0, 0), (1, 0), (0.5, sqrt(3)/2). Works row-wise on ``(..., 3)``."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 3:
        raise ValueError(f"simplex projection needs 3 states, got {p.shape[-1]}")
    return p @ TRIANGLE


def _save(fig, path) -> None:
    # the hash salt is read at save time, so it must be active here too
    with plt.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_simplex(points: np.ndarray, average: np.ndarray, path=None):
    """Per-policy paths over iterations on the triangle.

    ``points`` is ``(T, N, 3)`` and ``average`` is ``(T, 3)``. Later iterations
    are drawn darker.
    """
    xy = simplex_project(points)
    avg = simplex_project(average)
    T, N = xy.shape[:2]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.2, 3.8))
        outline = np.vstack([TRIANGLE, TRIANGLE[:1]])
        ax.plot(outline[:, 0], outline[:, 1], color="0.6", lw=0.8, gid="simplex-outline")
        shade = np.linspace(0.25, 1.0, T)
        for i in range(N):
            color = _COLORS[i % len(_COLORS)]
            ax.plot(xy[:, i, 0], xy[:, i, 1], color=color, lw=1.0, alpha=0.8,
                    gid=f"policy-path-{i}", label=f"z={i}")
            rgba = np.tile(matplotlib.colors.to_rgba(color), (T, 1))
            rgba[:, 3] = shade
            ax.scatter(xy[:, i, 0], xy[:, i, 1], s=8, c=rgba, linewidths=0,
                       gid=f"policy-shade-{i}")
        ax.plot(avg[:, 0], avg[:, 1], "o", ms=3, color="tab:blue", mfc="none",
                gid="average-marker", label=r"$\rho(s)$")
        for k, (x, y) in enumerate(TRIANGLE):
            ax.annotate(f"s{k}", (x, y), textcoords="offset points",
                        xytext=(0, 4 if k == 2 else -10), ha="center")
        ax.set_aspect("equal")
        ax.set_axis_off()
        ax.legend(loc="upper right", fontsize=7, frameon=False)
        fig.tight_layout()
    if path is not None:
        _save(fig, path)
    return fig


def plot_curves(curves: dict, path=None, ylabel: str = "I(s;z)", delta: float | None = None):
    """Mean curve with a min-max band per label.

    ``curves`` maps label to ``(iterations, mean, low, high)``; the x-axis spans
    exactly the union of the iteration ranges.
    """
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        lo_it, hi_it = math.inf, -math.inf
        for k, (label, (its, mean, low, high)) in enumerate(curves.items()):
            color = _COLORS[k % len(_COLORS)]
            ax.fill_between(its, low, high, color=color, alpha=0.2, lw=0, gid=f"band-{label}")
            ax.plot(its, mean, color=color, lw=1.4, label=label, gid=f"curve-{label}")
            lo_it, hi_it = min(lo_it, its[0]), max(hi_it, its[-1])
        if delta is not None:
            ax.axhline(delta, color="0.4", ls="--", lw=0.8, gid="delta-line")
        if hi_it > lo_it:
            ax.set_xlim(lo_it, hi_it)
        ax.set_xlabel("iteration")
        ax.set_ylabel(ylabel)
        ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
    if path is not None:
        _save(fig, path)
    return fig


def plot_regret(curves: dict, path=None):
    """Cumulative pseudo-regret, mean over seeds with a min-max band, log-log axes."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        for k, (label, runs) in enumerate(curves.items()):
            runs = np.asarray(runs)
            t = np.arange(1, runs.shape[1] + 1)
            color = _COLORS[k % len(_COLORS)]
            ax.fill_between(t, runs.min(axis=0), runs.max(axis=0), color=color,
                            alpha=0.2, lw=0, gid=f"band-{label}")
            ax.plot(t, runs.mean(axis=0), color=color, lw=1.4, label=label,
                    gid=f"curve-{label}")
        ax.set_xscale("log")
        ax.set_yscale("symlog", linthresh=1.0)
        ax.set_xlabel("round T")
        ax.set_ylabel("cumulative pseudo-regret")
        ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
    if path is not None:
        _save(fig, path)
    return fig
