"""Dataset construction and loading.

Two sources: a seeded synthetic cyclic-vs-acyclic benchmark built from
eight deterministic graph families, and a loader for the four-file TU
benchmark text layout (node-labeled molecule graphs such as MUTAG).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import networkx as nx
import numpy as np

from .errors import DatasetError
from .graphs import FeatureSpec, LabeledGraph, NodeType, from_json_dict, has_cycle, to_json_dict
from .rules import RuleSet, default_mutag_valency, valency_by_id

MUTAG_ATOMS = ("C", "N", "O", "F", "I", "Cl", "Br")


def generic_candidates() -> list[NodeType]:
    """Single-type candidate set for unlabeled datasets."""
    return [NodeType(0, "node")]


def mutag_candidates() -> list[NodeType]:
    return [NodeType(i, name) for i, name in enumerate(MUTAG_ATOMS)]


@dataclass(frozen=True)
class GraphDataset:
    graphs: tuple[LabeledGraph, ...]
    labels: tuple[int, ...]
    candidate_set: tuple[NodeType, ...]
    feature_spec: FeatureSpec
    rule_set: RuleSet

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        object.__setattr__(self, "labels", tuple(int(y) for y in self.labels))
        object.__setattr__(self, "candidate_set", tuple(self.candidate_set))
        if len(self.graphs) != len(self.labels):
            raise DatasetError(
                f"{len(self.graphs)} graphs vs {len(self.labels)} labels")
        known = {c.id for c in self.candidate_set}
        for g in self.graphs:
            stray = set(g.node_types) - known
            if stray:
                raise DatasetError(f"node types {sorted(stray)} not in candidate set")

    @property
    def class_count(self) -> int:
        return len(set(self.labels))

    def __len__(self) -> int:
        return len(self.graphs)


def statistics(ds: GraphDataset) -> dict:
    nodes = [g.node_count for g in ds.graphs]
    edges = [g.edge_count for g in ds.graphs]
    return {
        "graph_count": len(ds),
        "mean_nodes": float(np.mean(nodes)) if nodes else 0.0,
        "mean_edges": float(np.mean(edges)) if edges else 0.0,
        "class_counts": dict(sorted(Counter(ds.labels).items())),
    }


# ---------------------------------------------------------------------------
# Synthetic cyclic/acyclic benchmark
# ---------------------------------------------------------------------------

def _from_networkx(h: nx.Graph) -> LabeledGraph:
    h = nx.convert_node_labels_to_integers(h, ordering="sorted")
    return LabeledGraph([0] * h.number_of_nodes(), list(h.edges()))


def build_cycle(n: int) -> LabeledGraph:
    return _from_networkx(nx.cycle_graph(n))


def build_wheel(n: int) -> LabeledGraph:
    """Hub plus an (n-1)-cycle rim; n total nodes."""
    return _from_networkx(nx.wheel_graph(n))


def build_grid(rows: int, cols: int) -> LabeledGraph:
    return _from_networkx(nx.grid_2d_graph(rows, cols))


def build_circular_ladder(n: int) -> LabeledGraph:
    """Two n-cycles joined by rungs; 2n total nodes."""
    return _from_networkx(nx.circular_ladder_graph(n))


def build_star(n_total: int) -> LabeledGraph:
    return _from_networkx(nx.star_graph(n_total - 1))


def build_balanced_binary_tree(height: int) -> LabeledGraph:
    return _from_networkx(nx.balanced_tree(2, height))


def build_path(n: int) -> LabeledGraph:
    return _from_networkx(nx.path_graph(n))


def build_full_rary_tree(r: int, n: int) -> LabeledGraph:
    return _from_networkx(nx.full_rary_tree(r, n))


CYCLIC, ACYCLIC = 1, 0


def generate_is_acyclic(seed: int, count_per_family: int = 25,
                        max_nodes_rule: int = 50) -> GraphDataset:
    """Seeded two-class dataset: cyclic families (grids, cycles, wheels,
    circular ladders) against acyclic ones (stars, balanced binary trees,
    paths, full r-ary trees). Sizes are drawn per family so the node-count
    average lands near the high twenties while still covering very small
    graphs. Every label is verified against has_cycle at build time.
    """
    rng = np.random.default_rng(seed)
    graphs: list[LabeledGraph] = []
    labels: list[int] = []

    def emit(g: LabeledGraph, label: int) -> None:
        if has_cycle(g) != (label == CYCLIC):
            raise AssertionError("family constructor produced a mislabeled graph")
        graphs.append(g)
        labels.append(label)

    for _ in range(count_per_family):
        emit(build_cycle(int(rng.integers(3, 51))), CYCLIC)
        emit(build_wheel(int(rng.integers(6, 51))), CYCLIC)
        emit(build_grid(int(rng.integers(2, 8)), int(rng.integers(2, 8))), CYCLIC)
        emit(build_circular_ladder(int(rng.integers(3, 25))), CYCLIC)
        # paths are capped well below the longest cycles: a very long path
        # is nearly 2-regular, and with degree features its mean-pooled
        # embedding crowds the cycle cluster, pinching the class margin
        emit(build_path(int(rng.integers(2, 27))), ACYCLIC)
        emit(build_star(int(rng.integers(4, 51))), ACYCLIC)
        emit(build_balanced_binary_tree(int(rng.integers(2, 6))), ACYCLIC)
        emit(build_full_rary_tree(int(rng.integers(2, 5)), int(rng.integers(5, 51))), ACYCLIC)

    return GraphDataset(
        graphs=tuple(graphs),
        labels=tuple(labels),
        candidate_set=tuple(generic_candidates()),
        feature_spec=FeatureSpec("node_degree", 1),
        rule_set=RuleSet(max_nodes=max_nodes_rule),
    )


# ---------------------------------------------------------------------------
# TU text-format loader
# ---------------------------------------------------------------------------

def _find_tu_file(directory: Path, suffix: str) -> Path:
    hits = sorted(directory.glob(f"*{suffix}"))
    if not hits:
        raise DatasetError(f"{directory}: no file matching *{suffix}")
    return hits[0]


def _read_int_lines(path: Path) -> list[int]:
    try:
        return [int(line.strip()) for line in path.read_text().splitlines() if line.strip()]
    except ValueError as exc:
        raise DatasetError(f"{path}: non-integer line: {exc}") from exc


def load_tu_dataset(directory: str | Path,
                    max_nodes_rule: int = 50) -> GraphDataset:
    """Load a node-labeled TU-layout dataset (e.g. MUTAG).

    Expects the four standard files in `directory` (matched by suffix):
    *_A.txt (directed node-id pairs, 1-based), *_graph_indicator.txt,
    *_graph_labels.txt, *_node_labels.txt. Edge rows are deduplicated to
    undirected simple edges; node labels index the seven-atom candidate
    set; graph labels are mapped to 0..L-1 by ascending sort order, which
    for MUTAG puts "mutagenic" at class 1.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"{directory}: not a directory")

    indicator = _read_int_lines(_find_tu_file(directory, "_graph_indicator.txt"))
    node_labels = _read_int_lines(_find_tu_file(directory, "_node_labels.txt"))
    graph_labels_raw = _read_int_lines(_find_tu_file(directory, "_graph_labels.txt"))
    a_path = _find_tu_file(directory, "_A.txt")

    if len(indicator) != len(node_labels):
        raise DatasetError(
            f"{directory}: {len(indicator)} indicator rows vs "
            f"{len(node_labels)} node labels")
    total_nodes = len(indicator)
    graph_count = len(graph_labels_raw)
    if indicator and (min(indicator) != 1 or max(indicator) != graph_count):
        raise DatasetError(f"{directory}: graph indicator ids not 1..{graph_count}")

    # global 1-based node id -> (graph index, local index)
    local_index: list[tuple[int, int]] = []
    counts = [0] * graph_count
    for gid in indicator:
        counts[gid - 1] += 1
        local_index.append((gid - 1, counts[gid - 1] - 1))

    types_per_graph: list[list[int]] = [[] for _ in range(graph_count)]
    for (gi, _), t in zip(local_index, node_labels):
        if not 0 <= t < len(MUTAG_ATOMS):
            raise DatasetError(f"{directory}: node label {t} outside 0..6")
        types_per_graph[gi].append(t)

    edges_per_graph: list[set[tuple[int, int]]] = [set() for _ in range(graph_count)]
    for lineno, line in enumerate(a_path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            u_s, v_s = line.split(",")
            u, v = int(u_s), int(v_s)
        except ValueError as exc:
            raise DatasetError(f"{a_path}:{lineno}: bad edge row {line!r}") from exc
        if not (1 <= u <= total_nodes and 1 <= v <= total_nodes):
            raise DatasetError(f"{a_path}:{lineno}: node id out of range in {line!r}")
        if u == v:
            raise DatasetError(f"{a_path}:{lineno}: self-loop on node {u}")
        (gu, lu), (gv, lv) = local_index[u - 1], local_index[v - 1]
        if gu != gv:
            raise DatasetError(f"{a_path}:{lineno}: edge crosses graphs {gu + 1} and {gv + 1}")
        edges_per_graph[gu].add((min(lu, lv), max(lu, lv)))

    label_order = sorted(set(graph_labels_raw))
    label_map = {raw: i for i, raw in enumerate(label_order)}

    candidates = mutag_candidates()
    graphs = tuple(LabeledGraph(types_per_graph[i], edges_per_graph[i])
                   for i in range(graph_count))
    return GraphDataset(
        graphs=graphs,
        labels=tuple(label_map[raw] for raw in graph_labels_raw),
        candidate_set=tuple(candidates),
        feature_spec=FeatureSpec("one_hot_node_type", len(MUTAG_ATOMS)),
        rule_set=RuleSet(max_nodes=max_nodes_rule,
                         valency_limit=valency_by_id(default_mutag_valency(), candidates)),
    )


# ---------------------------------------------------------------------------
# JSON export / import
# ---------------------------------------------------------------------------

def dataset_to_json_dict(ds: GraphDataset) -> dict:
    return {
        "graphs": [to_json_dict(g) for g in ds.graphs],
        "labels": list(ds.labels),
        "candidates": [{"id": c.id, "name": c.name} for c in ds.candidate_set],
        "feature": {"mode": ds.feature_spec.mode, "dimension": ds.feature_spec.dimension},
        "rules": {
            "max_nodes": ds.rule_set.max_nodes,
            "valency_limit": (None if ds.rule_set.valency_limit is None
                              else {str(k): v for k, v in ds.rule_set.valency_limit.items()}),
            "forbid_duplicate_edges": ds.rule_set.forbid_duplicate_edges,
        },
    }


def dataset_from_json_dict(payload: dict) -> GraphDataset:
    try:
        valency = payload["rules"]["valency_limit"]
        return GraphDataset(
            graphs=tuple(from_json_dict(d) for d in payload["graphs"]),
            labels=tuple(payload["labels"]),
            candidate_set=tuple(NodeType(c["id"], c["name"]) for c in payload["candidates"]),
            feature_spec=FeatureSpec(payload["feature"]["mode"],
                                     payload["feature"]["dimension"]),
            rule_set=RuleSet(
                max_nodes=payload["rules"]["max_nodes"],
                valency_limit=None if valency is None
                else {int(k): int(v) for k, v in valency.items()},
                forbid_duplicate_edges=payload["rules"]["forbid_duplicate_edges"],
            ),
        )
    except (KeyError, TypeError) as exc:
        raise DatasetError(f"malformed dataset payload: {exc}") from exc


def save_dataset(ds: GraphDataset, directory: str | Path) -> Path:
    """Write dataset.json under `directory` and return its path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = directory / "dataset.json"
    out.write_text(json.dumps(dataset_to_json_dict(ds), indent=2) + "\n")
    return out


def load_dataset(path: str | Path) -> GraphDataset:
    """Read a dataset.json file (or a directory containing one)."""
    path = Path(path)
    if path.is_dir():
        path = path / "dataset.json"
    if not path.is_file():
        raise DatasetError(f"{path}: no such dataset file")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: invalid JSON: {exc}") from exc
    return dataset_from_json_dict(payload)


def with_max_nodes(ds: GraphDataset, max_nodes: int) -> RuleSet:
    """The dataset's rules with the node budget replaced (per-run setting)."""
    return replace(ds.rule_set, max_nodes=max_nodes)
