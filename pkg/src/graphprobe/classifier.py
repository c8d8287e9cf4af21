"""Graph classifiers: stacked GCN layers, mean pooling, dense head.

Each GCN layer computes act(A_hat @ X @ W) with the symmetrically
normalized self-looped adjacency; node embeddings are averaged into one
graph embedding, and a small fully-connected head produces class
probabilities. Training is full-batch Adam on mean cross-entropy, with
an early stop once the training set is fit perfectly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import (
    Adam,
    Tape,
    Tensor,
    activation,
    add,
    add_bias,
    cross_entropy,
    glorot_uniform,
    matmul,
    mean_pool_rows,
    mul_const,
    softmax_rows,
    zeros,
)
from .datasets import GraphDataset
from .errors import DegenerateDatasetError, EmptyGraphError
from .graphs import FeatureSpec, LabeledGraph, NodeType, feature_matrix, normalized_adjacency
from .weights import load_tensors, save_tensors


@dataclass
class GcnLayer:
    weight: Tensor
    activation_kind: str


@dataclass
class FcLayer:
    weight: Tensor
    bias: Tensor
    activation_kind: str | None = None  # None = linear output layer


class ClassifierModel:
    """Immutable-after-training GCN classifier; safe for concurrent reads."""

    def __init__(self, gcn_layers: Sequence[GcnLayer], fc_layers: Sequence[FcLayer],
                 class_count: int, feature_spec: FeatureSpec):
        if class_count < 2:
            raise ValueError("need at least two classes")
        if fc_layers[-1].weight.cols != class_count:
            raise ValueError(
                f"final layer width {fc_layers[-1].weight.cols} != {class_count} classes")
        self.gcn_layers = list(gcn_layers)
        self.fc_layers = list(fc_layers)
        self.class_count = class_count
        self.feature_spec = feature_spec

    def probabilities_from(self, features: Tensor, adjacency: Tensor) -> Tensor:
        """Forward pass from precomputed views; 1 x class_count probabilities."""
        h = features
        for layer in self.gcn_layers:
            h = activation(matmul(matmul(adjacency, h), layer.weight),
                           layer.activation_kind)
        z = mean_pool_rows(h)
        for layer in self.fc_layers:
            z = add_bias(matmul(z, layer.weight), layer.bias)
            if layer.activation_kind is not None:
                z = activation(z, layer.activation_kind)
        return softmax_rows(z)

    def forward(self, g: LabeledGraph) -> Tensor:
        if g.node_count == 0:
            raise EmptyGraphError("cannot classify an empty graph")
        return self.probabilities_from(feature_matrix(g, self.feature_spec),
                                       normalized_adjacency(g))

    def class_probability(self, g: LabeledGraph, class_index: int) -> float:
        if not 0 <= class_index < self.class_count:
            raise IndexError(
                f"class {class_index} out of range for {self.class_count} classes")
        return float(self.forward(g).data[0, class_index])

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named = [(f"gcn{i}_w", layer.weight) for i, layer in enumerate(self.gcn_layers)]
        for i, layer in enumerate(self.fc_layers):
            named += [(f"fc{i}_w", layer.weight), (f"fc{i}_b", layer.bias)]
        return named

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def architecture(self) -> dict:
        return {
            "gcn": [{"rows": l.weight.rows, "cols": l.weight.cols,
                     "activation": l.activation_kind} for l in self.gcn_layers],
            "fc": [{"rows": l.weight.rows, "cols": l.weight.cols,
                    "activation": l.activation_kind} for l in self.fc_layers],
            "class_count": self.class_count,
            "feature": {"mode": self.feature_spec.mode,
                        "dimension": self.feature_spec.dimension},
        }


def _degree_architecture(class_count: int, rng: np.random.Generator) -> ClassifierModel:
    # two sigmoid GCN layers (8, 16) over raw-degree features, linear head
    gcn = [GcnLayer(glorot_uniform(1, 8, rng), "sigmoid"),
           GcnLayer(glorot_uniform(8, 16, rng), "sigmoid")]
    fc = [FcLayer(glorot_uniform(16, class_count, rng), zeros(1, class_count))]
    return ClassifierModel(gcn, fc, class_count, FeatureSpec("node_degree", 1))


def _one_hot_architecture(feature_dim: int, class_count: int,
                          rng: np.random.Generator) -> ClassifierModel:
    # three relu GCN layers (32, 48, 64), relu hidden dense layer of 32
    gcn = [GcnLayer(glorot_uniform(feature_dim, 32, rng), "relu"),
           GcnLayer(glorot_uniform(32, 48, rng), "relu"),
           GcnLayer(glorot_uniform(48, 64, rng), "relu")]
    fc = [FcLayer(glorot_uniform(64, 32, rng), zeros(1, 32), "relu"),
          FcLayer(glorot_uniform(32, class_count, rng), zeros(1, class_count))]
    return ClassifierModel(gcn, fc, class_count,
                           FeatureSpec("one_hot_node_type", feature_dim))


def build_model(feature_spec: FeatureSpec, class_count: int,
                rng: np.random.Generator) -> ClassifierModel:
    """Standard architecture for the feature mode (degree vs one-hot)."""
    if feature_spec.mode == "node_degree":
        return _degree_architecture(class_count, rng)
    return _one_hot_architecture(feature_spec.dimension, class_count, rng)


@dataclass
class TrainConfig:
    epochs: int = 1000
    learning_rate: float = 0.01
    seed: int = 0
    stop_at_accuracy: float = 1.0


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    final_accuracy: float = 0.0

    @property
    def epochs_run(self) -> int:
        return len(self.epoch_losses)


def train(dataset: GraphDataset, config: TrainConfig = TrainConfig(),
          ) -> tuple[ClassifierModel, TrainReport]:
    """Train the standard model for this dataset; full-batch Adam per epoch."""
    if len(dataset) == 0:
        raise DegenerateDatasetError("empty dataset")
    class_count = dataset.class_count
    if class_count < 2:
        raise DegenerateDatasetError("training needs at least two classes present")

    rng = np.random.default_rng(config.seed)
    model = build_model(dataset.feature_spec, class_count, rng)
    views = [(feature_matrix(g, dataset.feature_spec), normalized_adjacency(g))
             for g in dataset.graphs]
    optimizer = Adam(model.parameters(), learning_rate=config.learning_rate)
    report = TrainReport()

    for _ in range(config.epochs):
        optimizer.zero_grad()
        correct = 0
        with Tape() as tape:
            total = None
            for (x, a), label in zip(views, dataset.labels):
                probs = model.probabilities_from(x, a)
                if int(np.argmax(probs.data[0])) == label:
                    correct += 1
                loss = cross_entropy(probs, label)
                total = loss if total is None else add(total, loss)
            mean_loss = mul_const(total, 1.0 / len(dataset))
        report.epoch_losses.append(mean_loss.item())
        if correct / len(dataset) >= config.stop_at_accuracy:
            break  # stop before stepping so the returned model is the one measured
        tape.backward(mean_loss)
        optimizer.step()
    report.final_accuracy = accuracy(model, dataset)
    return model, report


def accuracy(model: ClassifierModel, dataset: GraphDataset) -> float:
    """Fraction of graphs whose argmax prediction matches the label."""
    correct = sum(
        int(np.argmax(model.forward(g).data[0])) == y
        for g, y in zip(dataset.graphs, dataset.labels))
    return correct / len(dataset)


# ---------------------------------------------------------------------------
# Persistence: weights plus enough metadata to rebuild and explain the model
# ---------------------------------------------------------------------------

def save_classifier(path, model: ClassifierModel, candidates: Sequence[NodeType],
                    valency_limit: dict[int, int] | None = None,
                    extra_meta: dict | None = None) -> None:
    meta = {
        "kind": "classifier",
        "architecture": model.architecture(),
        "candidates": [{"id": c.id, "name": c.name} for c in candidates],
        "valency_limit": (None if valency_limit is None
                          else {str(k): v for k, v in valency_limit.items()}),
    }
    if extra_meta:
        meta.update(extra_meta)
    save_tensors(path, model.named_parameters(), meta)


@dataclass
class LoadedClassifier:
    model: ClassifierModel
    candidates: list[NodeType]
    valency_limit: dict[int, int] | None
    meta: dict


def load_classifier(path) -> LoadedClassifier:
    from .errors import WeightsError

    meta, tensors = load_tensors(path)
    if meta.get("kind") != "classifier":
        raise WeightsError(f"{path}: not a classifier weights file")
    arch = meta["architecture"]
    gcn = [GcnLayer(Tensor(tensors[f"gcn{i}_w"]), spec["activation"])
           for i, spec in enumerate(arch["gcn"])]
    fc = [FcLayer(Tensor(tensors[f"fc{i}_w"]), Tensor(tensors[f"fc{i}_b"]),
                  spec["activation"])
          for i, spec in enumerate(arch["fc"])]
    model = ClassifierModel(
        gcn, fc, arch["class_count"],
        FeatureSpec(arch["feature"]["mode"], arch["feature"]["dimension"]))
    candidates = [NodeType(c["id"], c["name"]) for c in meta["candidates"]]
    valency = meta.get("valency_limit")
    return LoadedClassifier(
        model=model,
        candidates=candidates,
        valency_limit=None if valency is None else {int(k): int(v)
                                                    for k, v in valency.items()},
        meta=meta,
    )
