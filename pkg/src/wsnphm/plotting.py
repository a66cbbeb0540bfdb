"""Matplotlib charts for error curves and topology layouts."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .diagnostics import AlgorithmKind  # noqa: E402
from .topology import SINK, RoutingPlan  # noqa: E402
from .world import Fleet, Health, Role  # noqa: E402

MARKERS = {"svm": "o", "naive_bayes": "s", "random_forest": "^", "gradient_tree_boosting": "v",
           "tree_feature_selection": "D", "nearest_neighbors": "x"}


def _label(algorithm: str) -> str:
    try:
        return AlgorithmKind(algorithm).short
    except ValueError:
        return algorithm


def error_chart(curves, path, png: bool = True) -> Path:
    """Error percentage against operating age, one series per algorithm.

    Writes ``path`` as SVG and, with ``png``, a PNG next to it.
    """
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for c in curves:
        ax.plot(c.ts, 100 * np.asarray(c.mean), marker=MARKERS.get(c.algorithm, "."),
                markevery=10, linewidth=1.2, label=_label(c.algorithm))
        ax.fill_between(c.ts, 100 * (c.mean - c.stderr), 100 * (c.mean + c.stderr), alpha=0.15)
    topology = curves[0].topology if curves else ""
    ax.set_title(f"{topology} topology ({curves[0].seeds if curves else 0} seeds)")
    ax.set_xlabel("operating age t")
    ax.set_ylabel("error rate (%)")
    ax.set_ylim(0, 100)
    ax.grid(alpha=0.3)
    ax.legend(loc="upper left", ncol=2, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    if png:
        fig.savefig(path.with_suffix(".png"), dpi=120)
    plt.close(fig)
    return path


def topology_chart(plan: RoutingPlan, fleet: Fleet, path, title: str = "") -> Path:
    """Node positions by role with next-hop links; dead nodes greyed out."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 6))
    pos = fleet.positions
    sink = fleet.sink
    alive = fleet.health != Health.DEAD
    for i, h in enumerate(plan.next_hop):
        if not alive[i] or h < SINK:
            continue
        end = sink if h == SINK else pos[h]
        ax.plot([pos[i, 0], end[0]], [pos[i, 1], end[1]], color="0.7", linewidth=0.5, zorder=1)
    styles = {Role.LEAF: ("o", 12, "tab:blue"), Role.CLUSTER_HEAD: ("s", 40, "tab:red"),
              Role.DISTRIBUTION: ("^", 40, "tab:green")}
    for role, (marker, size, color) in styles.items():
        sel = fleet.roles == role
        if sel.any():
            ax.scatter(pos[sel & alive, 0], pos[sel & alive, 1], marker=marker, s=size, c=color,
                       label=role.name.lower(), zorder=2)
            ax.scatter(pos[sel & ~alive, 0], pos[sel & ~alive, 1], marker=marker, s=size,
                       c="0.8", zorder=2)
    ax.scatter([sink[0]], [sink[1]], marker="*", s=200, c="k", label="sink", zorder=3)
    ax.set_xlim(0, fleet.region.length)
    ax.set_ylim(0, fleet.region.width)
    ax.set_aspect("equal")
    ax.set_title(title or f"{plan.kind.value} topology")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format=path.suffix.lstrip(".") or "svg")
    plt.close(fig)
    return path
