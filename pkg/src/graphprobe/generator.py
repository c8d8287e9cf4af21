"""Policy network that grows a graph one edge at a time.

The current graph and the candidate node set are merged into one input
(candidates stay unconnected), embedded by a projection layer plus three
GCN layers, and two small MLP heads then pick a starting node from the
graph and an ending node from graph-plus-candidates. Choosing a candidate
as the end materializes a new node of that type.

Masking works on probabilities: the softmax output is multiplied by a
0/1 mask and renormalized, and the renormalized vector is what both the
sampler and the policy-gradient loss consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import (
    Tensor,
    activation,
    add_bias,
    broadcast_row,
    concat_cols,
    glorot_uniform,
    matmul,
    mul_const,
    normalize_rows,
    pick_row,
    softmax_rows,
    transpose,
    zeros,
)
from .errors import EmptyGraphError, NoLegalActionError
from .graphs import FeatureSpec, LabeledGraph, NodeType, feature_matrix, normalized_adjacency

PROJECTION_DIM = 8
GCN_DIMS = (16, 24, 32)
START_HIDDEN = 16
END_HIDDEN = 24


@dataclass(frozen=True)
class Action:
    """One growth step: connect `start` (a graph node) to `end`.

    `end` indexes the merged graph-plus-candidates block; an end at or
    beyond the graph size means "append a new node of that candidate type".
    The two probabilities are the masked, renormalized values the sampler
    actually used — the policy-gradient loss must be computed from the
    same forward pass.
    """

    start: int
    end: int
    start_prob: float
    end_prob: float


@dataclass
class PolicyOutput:
    """Masked start/end distributions from one forward pass (tape-recorded
    when a tape is active, so a loss can be appended later)."""

    p_start: Tensor
    p_end: Tensor
    start_mask: np.ndarray
    end_mask: np.ndarray


class GeneratorPolicy:
    """Parameters of the generator: projection, GCN stack, two MLP heads."""

    def __init__(self, feature_dim: int, rng: np.random.Generator):
        if feature_dim < 1:
            raise ValueError("feature_dim must be positive")
        self.feature_dim = feature_dim
        self.proj_w = glorot_uniform(feature_dim, PROJECTION_DIM, rng)
        self.proj_b = zeros(1, PROJECTION_DIM)
        dims = (PROJECTION_DIM,) + GCN_DIMS
        self.gcn_weights = [glorot_uniform(dims[i], dims[i + 1], rng)
                            for i in range(len(GCN_DIMS))]
        embed = GCN_DIMS[-1]
        self.start_w1 = glorot_uniform(embed, START_HIDDEN, rng)
        self.start_b1 = zeros(1, START_HIDDEN)
        self.start_w2 = glorot_uniform(START_HIDDEN, 1, rng)
        self.start_b2 = zeros(1, 1)
        self.end_w1 = glorot_uniform(2 * embed, END_HIDDEN, rng)
        self.end_b1 = zeros(1, END_HIDDEN)
        self.end_w2 = glorot_uniform(END_HIDDEN, 1, rng)
        self.end_b2 = zeros(1, 1)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named = [("proj_w", self.proj_w), ("proj_b", self.proj_b)]
        named += [(f"gcn{i}_w", w) for i, w in enumerate(self.gcn_weights)]
        named += [
            ("start_w1", self.start_w1), ("start_b1", self.start_b1),
            ("start_w2", self.start_w2), ("start_b2", self.start_b2),
            ("end_w1", self.end_w1), ("end_b1", self.end_b1),
            ("end_w2", self.end_w2), ("end_b2", self.end_b2),
        ]
        return named

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]


def assemble_input(g: LabeledGraph, candidates: Sequence[NodeType],
                   spec: FeatureSpec) -> tuple[Tensor, Tensor]:
    """Features and normalized adjacency for the graph merged with candidates.

    Candidates are appended as isolated nodes, so after self-loop
    normalization their adjacency block is the identity and their degree
    features are zero.
    """
    merged = LabeledGraph(list(g.node_types) + [c.id for c in candidates],
                          g.edges)
    return feature_matrix(merged, spec), normalized_adjacency(merged)


def _embed(policy: GeneratorPolicy, features: Tensor, adjacency: Tensor) -> Tensor:
    h = add_bias(matmul(features, policy.proj_w), policy.proj_b)
    for w in policy.gcn_weights:
        h = activation(matmul(matmul(adjacency, h), w), "relu6")
    return h


def _head_scores(h: Tensor, w1, b1, w2, b2) -> Tensor:
    hidden = activation(add_bias(matmul(h, w1), b1), "relu6")
    scores = add_bias(matmul(hidden, w2), b2)
    return transpose(scores)  # 1 x (n+k)


def _masked_distribution(scores: Tensor, mask: np.ndarray) -> Tensor:
    raw = softmax_rows(scores)
    if float((raw.data * mask).sum()) <= 0.0:
        raise NoLegalActionError("every position is masked out")
    return normalize_rows(mul_const(raw, mask))


def _forward(policy: GeneratorPolicy, g: LabeledGraph,
             candidates: Sequence[NodeType], spec: FeatureSpec,
             choose_start: Callable[[np.ndarray], int],
             choose_end: Callable[[np.ndarray], int],
             ) -> tuple[Action, PolicyOutput]:
    if g.node_count == 0:
        raise EmptyGraphError("cannot run the policy on an empty graph")
    n, k = g.node_count, len(candidates)
    features, adjacency = assemble_input(g, candidates, spec)
    h = _embed(policy, features, adjacency)

    start_mask = np.concatenate([np.ones(n), np.zeros(k)]).reshape(1, -1)
    p_start = _masked_distribution(
        _head_scores(h, policy.start_w1, policy.start_b1,
                     policy.start_w2, policy.start_b2),
        start_mask)
    start = choose_start(p_start.data[0])

    start_row = broadcast_row(pick_row(h, start), n + k)
    end_mask = np.ones((1, n + k))
    end_mask[0, start] = 0.0
    p_end = _masked_distribution(
        _head_scores(concat_cols(h, start_row), policy.end_w1, policy.end_b1,
                     policy.end_w2, policy.end_b2),
        end_mask)
    end = choose_end(p_end.data[0])

    action = Action(start=start, end=end,
                    start_prob=float(p_start.data[0, start]),
                    end_prob=float(p_end.data[0, end]))
    output = PolicyOutput(p_start=p_start, p_end=p_end,
                          start_mask=start_mask, end_mask=end_mask)
    return action, output


def _draw(rng: np.random.Generator, probs: np.ndarray) -> int:
    return int(rng.choice(len(probs), p=probs / probs.sum()))


def sample_action(policy: GeneratorPolicy, g: LabeledGraph,
                  candidates: Sequence[NodeType], spec: FeatureSpec,
                  rng: np.random.Generator) -> tuple[Action, PolicyOutput]:
    """Sample (start, end) from the masked policy distributions."""
    return _forward(policy, g, candidates, spec,
                    lambda p: _draw(rng, p),
                    lambda p: _draw(rng, p))


def policy_forward(policy: GeneratorPolicy, g: LabeledGraph,
                   candidates: Sequence[NodeType], spec: FeatureSpec,
                   start: int | None = None) -> tuple[Action, PolicyOutput]:
    """Deterministic evaluation: most probable start (or the given one),
    most probable end. Pure in (parameters, graph, candidates)."""
    pick_start = (lambda p: int(np.argmax(p))) if start is None else (lambda p: start)
    return _forward(policy, g, candidates, spec,
                    pick_start, lambda p: int(np.argmax(p)))


def apply_action(g: LabeledGraph, action: Action,
                 candidates: Sequence[NodeType]) -> LabeledGraph:
    """Realize an action: add an edge, or append a candidate node plus edge.

    Raises the underlying structural errors (duplicate edge, bad index);
    the training loop catches those and routes them into the rule reward.
    """
    if action.end < g.node_count:
        return g.add_edge(action.start, action.end)
    candidate_index = action.end - g.node_count
    if candidate_index >= len(candidates):
        raise IndexError(f"end index {action.end} beyond graph and candidates")
    return g.add_node_with_edge(action.start, candidates[candidate_index].id)
