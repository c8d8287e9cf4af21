"""Undirected node-typed graphs with the views a GCN needs.

A :class:`LabeledGraph` is an immutable value: edit operations return new
graphs, which makes the generator's roll-back step a matter of keeping the
previous reference around. Feature and adjacency matrices are recomputed
from the current structure on every call, so degree features always
reflect the graph being scored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .autodiff import Tensor
from .errors import DatasetError, EmptyGraphError, RuleViolationError, SelfLoopError

Edge = tuple[int, int]


@dataclass(frozen=True)
class NodeType:
    """One entry of a dataset's candidate set, e.g. carbon in a molecule."""

    id: int
    name: str


@dataclass(frozen=True)
class FeatureSpec:
    """How initial node features are derived from the graph.

    ``node_degree`` yields an n x 1 column of raw degrees; ``one_hot_node_type``
    yields an n x k indicator matrix over the candidate set.
    """

    mode: str
    dimension: int

    _MODES = ("one_hot_node_type", "node_degree")

    def __post_init__(self):
        if self.mode not in self._MODES:
            raise ValueError(f"unknown feature mode {self.mode!r}, expected one of {self._MODES}")
        if self.dimension < 1:
            raise ValueError("feature dimension must be positive")


def _normalize_edge(u: int, v: int) -> Edge:
    if u == v:
        raise SelfLoopError(f"self-loop on node {u}")
    return (u, v) if u < v else (v, u)


class LabeledGraph:
    """Simple undirected graph whose nodes carry a type id.

    Node indices are dense 0..n-1; edges are stored as a frozenset of
    (low, high) index pairs. Instances never change after construction.
    """

    __slots__ = ("node_types", "edges")

    def __init__(self, node_types: Iterable[int], edges: Iterable[Edge] = ()):
        types = tuple(int(t) for t in node_types)
        if any(t < 0 for t in types):
            raise ValueError("node type ids must be nonnegative")
        n = len(types)
        normalized = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < n and 0 <= v < n):
                raise IndexError(f"edge ({u}, {v}) out of range for {n} nodes")
            normalized.add(_normalize_edge(u, v))
        object.__setattr__(self, "node_types", types)
        object.__setattr__(self, "edges", frozenset(normalized))

    def __setattr__(self, name, value):
        raise AttributeError("LabeledGraph is immutable")

    @property
    def node_count(self) -> int:
        return len(self.node_types)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def degree(self, u: int) -> int:
        return int(self.degrees()[u])

    def has_edge(self, u: int, v: int) -> bool:
        if u == v:
            return False
        return _normalize_edge(u, v) in self.edges

    def sorted_edges(self) -> list[Edge]:
        """Edges in lexicographic order — the canonical order for output."""
        return sorted(self.edges)

    def add_edge(self, u: int, v: int) -> "LabeledGraph":
        """Return a copy with edge {u, v} added; self is untouched."""
        n = self.node_count
        if not (0 <= u < n and 0 <= v < n):
            raise IndexError(f"edge ({u}, {v}) out of range for {n} nodes")
        e = _normalize_edge(u, v)
        if e in self.edges:
            raise RuleViolationError(f"edge {e} already present")
        return LabeledGraph(self.node_types, self.edges | {e})

    def add_node_with_edge(self, anchor: int, node_type: int) -> "LabeledGraph":
        """Return a copy with one new node of the given type wired to anchor."""
        n = self.node_count
        if not 0 <= anchor < n:
            raise IndexError(f"anchor {anchor} out of range for {n} nodes")
        return LabeledGraph(self.node_types + (int(node_type),),
                            self.edges | {(anchor, n)})

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledGraph):
            return NotImplemented
        return self.node_types == other.node_types and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.node_types, self.edges))

    def __repr__(self) -> str:
        return f"LabeledGraph(n={self.node_count}, m={self.edge_count})"


def feature_matrix(g: LabeledGraph, spec: FeatureSpec) -> Tensor:
    """Initial node features for g under the given spec (n x d)."""
    if g.node_count == 0:
        raise EmptyGraphError("cannot build features for an empty graph")
    if spec.mode == "node_degree":
        return Tensor(g.degrees().astype(np.float64).reshape(-1, 1))
    # one_hot_node_type
    x = np.zeros((g.node_count, spec.dimension))
    for i, t in enumerate(g.node_types):
        if t >= spec.dimension:
            raise ValueError(
                f"node type id {t} exceeds one-hot dimension {spec.dimension}")
        x[i, t] = 1.0
    return Tensor(x)


def normalized_adjacency(g: LabeledGraph) -> Tensor:
    """Symmetric self-loop normalization D^{-1/2} (A + I) D^{-1/2}."""
    if g.node_count == 0:
        raise EmptyGraphError("cannot normalize an empty graph")
    n = g.node_count
    a_hat = np.eye(n)
    for u, v in g.edges:
        a_hat[u, v] = 1.0
        a_hat[v, u] = 1.0
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return Tensor(a_hat * inv_sqrt[:, None] * inv_sqrt[None, :])


def has_cycle(g: LabeledGraph) -> bool:
    """Union-find over the edge set; first merge of an already-joined pair wins."""
    parent = list(range(g.node_count))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]  # path halving
            x = parent[x]
        return x

    for u, v in g.edges:
        ru, rv = find(u), find(v)
        if ru == rv:
            return True
        parent[ru] = rv
    return False


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def to_json_dict(g: LabeledGraph) -> dict:
    return {
        "node_types": list(g.node_types),
        "edges": [[u, v] for u, v in g.sorted_edges()],
    }


def to_json(g: LabeledGraph) -> str:
    return json.dumps(to_json_dict(g), indent=2) + "\n"


def from_json_dict(payload: dict) -> LabeledGraph:
    try:
        node_types = payload["node_types"]
        edges = [tuple(e) for e in payload["edges"]]
    except (KeyError, TypeError) as exc:
        raise DatasetError(f"malformed graph record: {exc}") from exc
    return LabeledGraph(node_types, edges)


def from_json(text: str) -> LabeledGraph:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"graph file is not valid JSON: {exc}") from exc
    return from_json_dict(payload)


_DOT_PALETTE = (
    "#8dd3c7", "#80b1d3", "#fb8072", "#fdb462",
    "#b3de69", "#bebada", "#fccde5", "#d9d9d9",
)


def type_color(type_id: int) -> str:
    """Stable fill color for a node type (shared by DOT and figure output)."""
    return _DOT_PALETTE[type_id % len(_DOT_PALETTE)]


def to_dot(g: LabeledGraph, candidates: Sequence[NodeType] | None = None) -> str:
    """Graphviz source with one fill color per node type."""
    lines = ["graph G {", "  node [style=filled];"]
    for i, t in enumerate(g.node_types):
        label = candidates[t].name if candidates and t < len(candidates) else str(t)
        lines.append(f'  {i} [label="{label}", fillcolor="{type_color(t)}"];')
    for u, v in g.sorted_edges():
        lines.append(f"  {u} -- {v};")
    lines.append("}")
    return "\n".join(lines) + "\n"
