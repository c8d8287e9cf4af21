"""Model-level explanation by reinforcement-learning graph generation.

Starting from a seed graph, a generator policy proposes one edge (or one
new node plus edge) per step. Each proposal is scored by how strongly
the classifier under inspection predicts the target class — immediately,
after simulated completions (rollouts), and against validity rules — and
the policy is updated with a reward-scaled cross-entropy loss on the
action it took. Steps whose total reward is negative keep the parameter
update but roll the graph back, per the generation algorithm.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .autodiff import Adam, Tape, add, cross_entropy, mul_const
from .classifier import ClassifierModel
from .errors import NoLegalActionError, RuleViolationError
from .generator import (
    Action,
    GeneratorPolicy,
    PolicyOutput,
    apply_action,
    sample_action,
)
from .graphs import LabeledGraph, NodeType, to_json_dict
from .rules import RuleSet, Violation, check

REWARD_MODES = ("rule_component", "total_override")


@dataclass(frozen=True)
class ExplainConfig:
    """Settings for one explanation run.

    invalid_reward_mode picks how a rule violation enters the reward:
    as a weighted component of the sum ("rule_component") or by forcing
    the whole step reward to -1 ("total_override").
    """

    target_class: int
    max_steps: int
    max_nodes: int
    rollout_count: int = 10
    lambda1: float = 1.0
    lambda2: float = 1.0
    invalid_reward_mode: str = "rule_component"
    initial_graph: LabeledGraph | None = None
    learning_rate: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.target_class < 0:
            raise ValueError("target_class must be nonnegative")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.max_nodes < 2:
            raise ValueError("max_nodes must be at least 2")
        if self.rollout_count < 1:
            raise ValueError("rollout_count must be at least 1")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda weights must be nonnegative")
        if self.invalid_reward_mode not in REWARD_MODES:
            raise ValueError(
                f"invalid_reward_mode must be one of {REWARD_MODES}, "
                f"got {self.invalid_reward_mode!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.initial_graph is not None:
            if self.initial_graph.node_count == 0:
                raise ValueError("initial_graph must be nonempty")
            if self.initial_graph.node_count > self.max_nodes:
                raise ValueError("initial_graph already exceeds max_nodes")


@dataclass(frozen=True)
class RewardBreakdown:
    intermediate: float
    rollout_mean: float
    rule: float
    total: float
    rollouts: tuple[float, ...] = ()


@dataclass(frozen=True)
class StepTrace:
    step: int
    action: Action | None
    reward: RewardBreakdown | None
    rolled_back: bool
    graph_after: LabeledGraph
    violation: Violation | None = None
    skipped: bool = False


@dataclass
class ExplainResult:
    final_graph: LabeledGraph
    trace: list[StepTrace]
    policy: GeneratorPolicy


def intermediate_reward(model: ClassifierModel, g: LabeledGraph,
                        target_class: int) -> float:
    """Class probability shifted so chance level scores zero."""
    return model.class_probability(g, target_class) - 1.0 / model.class_count


def _rollout(policy: GeneratorPolicy, g: LabeledGraph,
             candidates: Sequence[NodeType], model: ClassifierModel,
             rules: RuleSet, cfg: ExplainConfig,
             rng: np.random.Generator) -> LabeledGraph:
    """Grow g with the current policy (read-only, nothing recorded) for up
    to max_steps further actions. Actions that violate a rule — including
    node additions past the budget — are discarded with the step consumed,
    so a rollout at the node budget can still close internal edges."""
    current = g
    for _ in range(cfg.max_steps):
        try:
            action, _ = sample_action(policy, current, candidates,
                                      model.feature_spec, rng)
        except NoLegalActionError:
            break
        try:
            candidate_next = apply_action(current, action, candidates)
        except RuleViolationError:
            continue
        if check(current, action, candidate_next, rules) is not None:
            continue
        current = candidate_next
    return current


def rollout_reward(model: ClassifierModel, policy: GeneratorPolicy,
                   g: LabeledGraph, candidates: Sequence[NodeType],
                   rules: RuleSet, cfg: ExplainConfig,
                   rng: np.random.Generator) -> tuple[float, tuple[float, ...]]:
    """Mean (and individual values) of the intermediate reward over
    rollout_count completed futures of g. Each rollout gets its own
    spawned rng stream, so the set of futures is reproducible."""
    values = []
    for child in rng.spawn(cfg.rollout_count):
        final = _rollout(policy, g, candidates, model, rules, cfg, child)
        values.append(intermediate_reward(model, final, cfg.target_class))
    return float(np.mean(values)), tuple(values)


def step_reward(intermediate: float, rollout_mean: float,
                rollouts: tuple[float, ...], violation: Violation | None,
                cfg: ExplainConfig) -> RewardBreakdown:
    rule = 0.0 if violation is None else -1.0
    if cfg.invalid_reward_mode == "total_override" and violation is not None:
        total = -1.0
    else:
        total = intermediate + cfg.lambda1 * rollout_mean + cfg.lambda2 * rule
    return RewardBreakdown(intermediate=intermediate, rollout_mean=rollout_mean,
                           rule=rule, total=total, rollouts=rollouts)


def policy_update(optimizer: Adam, tape: Tape, output: PolicyOutput,
                  action: Action, reward_total: float) -> bool:
    """One optimizer step on reward * (CE(p_start, a_start) + CE(p_end, a_end)).

    Minimizing that loss raises the taken action's probability when the
    reward is positive and lowers it when negative. A zero reward is a
    true no-op: the analytic gradient is zero, and skipping the optimizer
    call also keeps Adam's moment estimates from drifting the parameters.
    Returns whether a step was applied.
    """
    if reward_total == 0.0:
        return False
    with tape:
        ce = add(cross_entropy(output.p_start, action.start),
                 cross_entropy(output.p_end, action.end))
        loss = mul_const(ce, reward_total)
    optimizer.zero_grad()
    tape.backward(loss)
    optimizer.step()
    return True


def effective_rules(cfg: ExplainConfig, rules: RuleSet | None) -> RuleSet:
    """The run's rule set: caller-provided rules with cfg.max_nodes enforced."""
    if rules is None:
        return RuleSet(max_nodes=cfg.max_nodes)
    return replace(rules, max_nodes=cfg.max_nodes)


def explain(model: ClassifierModel, cfg: ExplainConfig,
            candidates: Sequence[NodeType],
            rules: RuleSet | None = None) -> ExplainResult:
    """Train a fresh generator against `model` and return the grown graph.

    Per step: sample an action, realize the successor graph, score it
    (intermediate + rollouts + rule term), update the policy, then roll
    the graph back iff the total reward is negative. The parameter update
    itself is never rolled back.
    """
    if not candidates:
        raise ValueError("need at least one candidate node type")
    if cfg.target_class >= model.class_count:
        raise IndexError(
            f"target class {cfg.target_class} out of range "
            f"for {model.class_count} classes")
    run_rules = effective_rules(cfg, rules)
    rng = np.random.default_rng(cfg.seed)
    policy = GeneratorPolicy(model.feature_spec.dimension, rng)
    optimizer = Adam(policy.parameters(), learning_rate=cfg.learning_rate)
    g = cfg.initial_graph if cfg.initial_graph is not None \
        else LabeledGraph([candidates[0].id])

    trace: list[StepTrace] = []
    for t in range(cfg.max_steps):
        try:
            with Tape() as tape:
                action, output = sample_action(policy, g, candidates,
                                               model.feature_spec, rng)
        except NoLegalActionError:
            trace.append(StepTrace(step=t, action=None, reward=None,
                                   rolled_back=False, graph_after=g,
                                   skipped=True))
            continue

        try:
            g_next = apply_action(g, action, candidates)
        except RuleViolationError:
            g_next = g  # a duplicate edge cannot be realized; graph unchanged
        violation = check(g, action, g_next, run_rules)

        intermediate = intermediate_reward(model, g_next, cfg.target_class)
        if cfg.invalid_reward_mode == "total_override" and violation is not None:
            rollout_mean, rollouts = 0.0, ()
        else:
            rollout_mean, rollouts = rollout_reward(
                model, policy, g_next, candidates, run_rules, cfg, rng)
        breakdown = step_reward(intermediate, rollout_mean, rollouts,
                                violation, cfg)

        policy_update(optimizer, tape, output, action, breakdown.total)

        rolled_back = breakdown.total < 0
        if rolled_back:
            g_next = g
        g = g_next
        trace.append(StepTrace(step=t, action=action, reward=breakdown,
                               rolled_back=rolled_back, graph_after=g,
                               violation=violation))
    return ExplainResult(final_graph=g, trace=trace, policy=policy)


# ---------------------------------------------------------------------------
# Trace serialization (JSON lines, one step per line)
# ---------------------------------------------------------------------------

def step_to_json_dict(st: StepTrace) -> dict:
    if st.skipped:
        return {"step": st.step, "skipped": True,
                "graph": to_json_dict(st.graph_after)}
    return {
        "step": st.step,
        "action": {"start": st.action.start, "end": st.action.end,
                   "start_prob": st.action.start_prob,
                   "end_prob": st.action.end_prob},
        "reward": {"intermediate": st.reward.intermediate,
                   "rollout_mean": st.reward.rollout_mean,
                   "rollouts": list(st.reward.rollouts),
                   "rule": st.reward.rule,
                   "total": st.reward.total},
        "violation": None if st.violation is None else st.violation.value,
        "rolled_back": st.rolled_back,
        "graph": to_json_dict(st.graph_after),
    }


def trace_to_jsonl(trace: Sequence[StepTrace]) -> str:
    return "".join(json.dumps(step_to_json_dict(st), sort_keys=True) + "\n"
                   for st in trace)
