"""Matplotlib renderings of generated graphs.

Single-graph pictures accompany each explanation run, and sweep runs get
a panel grid (one subplot per setting) in the style of a results figure.
Layouts are seeded so re-rendering the same graph gives the same image.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import networkx as nx  # noqa: E402

from .graphs import LabeledGraph, NodeType, type_color  # noqa: E402

_LAYOUT_SEED = 20260815


def _to_networkx(g: LabeledGraph) -> nx.Graph:
    h = nx.Graph()
    h.add_nodes_from(range(g.node_count))
    h.add_edges_from(g.sorted_edges())
    return h


def _draw_on_axis(ax, g: LabeledGraph, candidates: Sequence[NodeType] | None,
                  title: str | None) -> None:
    h = _to_networkx(g)
    pos = nx.spring_layout(h, seed=_LAYOUT_SEED)
    colors = [type_color(t) for t in g.node_types]
    if candidates:
        labels = {i: candidates[t].name if t < len(candidates) else str(t)
                  for i, t in enumerate(g.node_types)}
    else:
        labels = {i: str(i) for i in range(g.node_count)}
    nx.draw_networkx_edges(h, pos, ax=ax, width=1.4)
    nx.draw_networkx_nodes(h, pos, ax=ax, node_color=colors,
                           edgecolors="#404040", node_size=650)
    nx.draw_networkx_labels(h, pos, labels=labels, ax=ax, font_size=9)
    if title:
        ax.set_title(title, fontsize=10)
    ax.set_axis_off()


def render_graph(g: LabeledGraph, path: str | Path,
                 candidates: Sequence[NodeType] | None = None,
                 title: str | None = None) -> Path:
    """Draw one graph to an image file; returns the path written."""
    fig, ax = plt.subplots(figsize=(4, 4))
    _draw_on_axis(ax, g, candidates, title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_panels(entries: Sequence[tuple[str, LabeledGraph]], path: str | Path,
                  candidates: Sequence[NodeType] | None = None,
                  columns: int = 3) -> Path:
    """Draw a titled panel per (title, graph) entry in a grid figure."""
    if not entries:
        raise ValueError("nothing to render")
    count = len(entries)
    cols = min(columns, count)
    rows = (count + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(3.4 * cols, 3.4 * rows),
                             squeeze=False)
    flat = [ax for row in axes for ax in row]
    for ax, (title, g) in zip(flat, entries):
        _draw_on_axis(ax, g, candidates, title)
    for ax in flat[count:]:
        ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
