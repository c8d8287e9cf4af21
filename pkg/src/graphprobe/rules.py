"""Validity rules that feed the rule reward during generation.

Three rules, checked in a fixed order so logs are stable: no second edge
between the same pair, no growth past the node budget, and no node degree
above its type's valency limit. Violations are values, not exceptions —
the training loop turns them into negative reward.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Sequence

from .graphs import LabeledGraph, NodeType

if TYPE_CHECKING:  # pragma: no cover
    from .generator import Action


class Violation(enum.Enum):
    DUPLICATE_EDGE = "duplicate_edge"
    NODE_BUDGET = "node_budget"
    VALENCY = "valency"


@dataclass(frozen=True)
class RuleSet:
    """Structural constraints on generated graphs.

    valency_limit maps node-type id to the maximum allowed degree; types
    absent from the map are unconstrained. Duplicate-edge prohibition is
    always on (simple graphs only); the flag exists so configs can state
    it explicitly.
    """

    max_nodes: int
    valency_limit: Mapping[int, int] | None = None
    forbid_duplicate_edges: bool = True

    def __post_init__(self):
        if self.max_nodes < 2:
            raise ValueError(f"max_nodes must be at least 2, got {self.max_nodes}")
        if self.valency_limit is not None:
            bad = {t: v for t, v in self.valency_limit.items() if v < 1}
            if bad:
                raise ValueError(f"valency limits must be >= 1, got {bad}")
            object.__setattr__(self, "valency_limit", dict(self.valency_limit))


def check(g_before: LabeledGraph, action: "Action", g_after: LabeledGraph,
          rules: RuleSet) -> Violation | None:
    """First violated rule for taking `action` from g_before, or None.

    g_after is the realized result; for a duplicate-edge action (which a
    simple graph cannot represent) callers pass g_after = g_before.
    """
    if rules.forbid_duplicate_edges and action.end < g_before.node_count:
        if g_before.has_edge(action.start, action.end):
            return Violation.DUPLICATE_EDGE
    if g_after.node_count > rules.max_nodes:
        return Violation.NODE_BUDGET
    if rules.valency_limit:
        degrees = g_after.degrees()
        for node, t in enumerate(g_after.node_types):
            limit = rules.valency_limit.get(t)
            if limit is not None and degrees[node] > limit:
                return Violation.VALENCY
    return None


def default_mutag_valency() -> dict[str, int]:
    """Maximum covalent valence per atom symbol (N at 5 keeps nitro groups legal)."""
    return {"C": 4, "N": 5, "O": 2, "F": 1, "I": 1, "Cl": 1, "Br": 1}


def valency_by_id(by_name: Mapping[str, int],
                  candidates: Sequence[NodeType]) -> dict[int, int]:
    """Rekey a name-based valency table by candidate-set type ids."""
    return {c.id: by_name[c.name] for c in candidates if c.name in by_name}
