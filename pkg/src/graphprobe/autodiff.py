"""Reverse-mode automatic differentiation on dense 2-D float64 tensors.

Just enough machinery for small graph-convolutional networks: matrix
products, elementwise activations, row softmax, cross entropy, mean
pooling, and an Adam optimizer. Gradients are recorded on an explicit
:class:`Tape`; operations executed outside a ``with Tape():`` block are
plain numpy evaluations with no recording overhead.

A tape and the tensors flowing through it belong to a single thread.
Parameter tensors may be shared read-only across threads as long as no
optimizer step runs concurrently.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, EmptyGraphError

_LOG_FLOOR = 1e-12

_tls = threading.local()


class Tensor:
    """Dense 2-D float64 value, row-major, with an optional gradient slot."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"tensors are 2-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise FloatingPointError("tensor contains NaN or Inf")
        self.data = arr
        self.grad: np.ndarray | None = None

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def copy(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of operations; backward replays it in exact reverse.

    Re-entering the same tape is allowed, so a caller can run a forward
    pass, inspect the outputs, and later append the loss computation
    before calling :meth:`backward`.
    """

    def __init__(self):
        self._nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_tls, "stack", None)
        if stack is None:
            stack = _tls.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tls.stack.pop()
        return False

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...],
                backward: Callable[[np.ndarray], tuple]) -> None:
        self._nodes.append(_Node(out, inputs, backward))

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(tensor) into ``.grad`` of every tensor used."""
        if loss.data.size != 1:
            raise DimensionError(f"backward needs a scalar loss, got {loss.shape}")
        flow: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        holders: dict[int, Tensor] = {id(loss): loss}
        for node in reversed(self._nodes):
            out_grad = flow.get(id(node.out))
            if out_grad is None:
                continue
            for tensor, grad in zip(node.inputs, node.backward(out_grad)):
                if grad is None:
                    continue
                key = id(tensor)
                if key in flow:
                    flow[key] = flow[key] + grad
                else:
                    flow[key] = grad
                    holders[key] = tensor
        for key, grad in flow.items():
            tensor = holders[key]
            tensor.grad = grad if tensor.grad is None else tensor.grad + grad


def _tape() -> Tape | None:
    stack = getattr(_tls, "stack", None)
    return stack[-1] if stack else None


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# Operations. Each evaluates eagerly with numpy and, when a tape is active,
# records a closure returning input gradients aligned with the input tuple.
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise DimensionError(f"matmul shapes {a.shape} x {b.shape} do not chain")
    out = Tensor(a.data @ b.data)
    tape = _tape()
    if tape is not None:
        a_data, b_data = a.data, b.data
        tape._record(out, (a, b),
                     lambda g: (g @ b_data.T, a_data.T @ g))
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add shapes {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)
    tape = _tape()
    if tape is not None:
        tape._record(out, (a, b), lambda g: (g, g))
    return out


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a 1 x cols bias row to every row of x."""
    if bias.rows != 1 or bias.cols != x.cols:
        raise DimensionError(f"bias {bias.shape} does not broadcast over {x.shape}")
    out = Tensor(x.data + bias.data)
    tape = _tape()
    if tape is not None:
        tape._record(out, (x, bias),
                     lambda g: (g, g.sum(axis=0, keepdims=True)))
    return out


def mul_const(x: Tensor, factor) -> Tensor:
    """Multiply elementwise by a non-differentiated constant (scalar or array)."""
    const = np.asarray(factor, dtype=np.float64)
    out = Tensor(x.data * const)
    tape = _tape()
    if tape is not None:
        tape._record(out, (x,), lambda g: (g * const,))
    return out


_ACTIVATIONS = ("sigmoid", "relu", "relu6")


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "sigmoid":
        y = 1.0 / (1.0 + np.exp(-x.data))
        local = y * (1.0 - y)
    elif kind == "relu":
        y = np.maximum(x.data, 0.0)
        local = (x.data > 0.0).astype(np.float64)
    elif kind == "relu6":
        y = np.minimum(np.maximum(x.data, 0.0), 6.0)
        # zero subgradient at both kinks
        local = ((x.data > 0.0) & (x.data < 6.0)).astype(np.float64)
    else:
        raise ValueError(f"unknown activation {kind!r}, expected one of {_ACTIVATIONS}")
    out = Tensor(y)
    tape = _tape()
    if tape is not None:
        tape._record(out, (x,), lambda g: (g * local,))
    return out


def softmax_rows(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    out = Tensor(y)
    tape = _tape()
    if tape is not None:
        tape._record(out, (x,),
                     lambda g: (y * (g - (g * y).sum(axis=1, keepdims=True)),))
    return out


def normalize_rows(x: Tensor) -> Tensor:
    """Divide each row by its sum, turning nonnegative scores into probabilities."""
    s = x.data.sum(axis=1, keepdims=True)
    if np.any(s <= 0.0):
        raise ValueError("normalize_rows needs a positive row sum")
    y = x.data / s
    out = Tensor(y)
    tape = _tape()
    if tape is not None:
        tape._record(out, (x,),
                     lambda g: ((g - (g * y).sum(axis=1, keepdims=True)) / s,))
    return out


def cross_entropy(probs: Tensor, target_index: int) -> Tensor:
    """Negative log probability of the target entry of a probability row."""
    if probs.rows != 1:
        raise DimensionError(f"cross_entropy expects a 1 x n row, got {probs.shape}")
    if not 0 <= target_index < probs.cols:
        raise IndexError(f"target index {target_index} out of range for {probs.cols} classes")
    if abs(probs.data.sum() - 1.0) > 1e-6:
        raise ValueError("cross_entropy input does not sum to 1")
    p = probs.data[0, target_index]
    floored = max(p, _LOG_FLOOR)
    out = Tensor(-np.log(floored))
    tape = _tape()
    if tape is not None:
        cols = probs.cols

        def _backward(g):
            grad = np.zeros((1, cols))
            if p > _LOG_FLOOR:
                grad[0, target_index] = -g[0, 0] / p
            return (grad,)

        tape._record(out, (probs,), _backward)
    return out


def mean_pool_rows(x: Tensor) -> Tensor:
    if x.rows == 0:
        raise EmptyGraphError("cannot pool an empty tensor")
    n = x.rows
    out = Tensor(x.data.mean(axis=0, keepdims=True))
    tape = _tape()
    if tape is not None:
        tape._record(out, (x,),
                     lambda g: (np.repeat(g, n, axis=0) / n,))
    return out


def transpose(x: Tensor) -> Tensor:
    out = Tensor(x.data.T)
    tape = _tape()
    if tape is not None:
        tape._record(out, (x,), lambda g: (g.T,))
    return out


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.rows != b.rows:
        raise DimensionError(f"concat_cols row mismatch {a.shape} vs {b.shape}")
    out = Tensor(np.concatenate([a.data, b.data], axis=1))
    tape = _tape()
    if tape is not None:
        split = a.cols
        tape._record(out, (a, b), lambda g: (g[:, :split], g[:, split:]))
    return out


def broadcast_row(x: Tensor, n_rows: int) -> Tensor:
    if x.rows != 1:
        raise DimensionError(f"broadcast_row expects a single row, got {x.shape}")
    out = Tensor(np.repeat(x.data, n_rows, axis=0))
    tape = _tape()
    if tape is not None:
        tape._record(out, (x,), lambda g: (g.sum(axis=0, keepdims=True),))
    return out


def pick_row(x: Tensor, index: int) -> Tensor:
    if not 0 <= index < x.rows:
        raise IndexError(f"row {index} out of range for {x.rows} rows")
    out = Tensor(x.data[index:index + 1, :])
    tape = _tape()
    if tape is not None:
        shape = x.shape

        def _backward(g):
            grad = np.zeros(shape)
            grad[index, :] = g[0, :]
            return (grad,)

        tape._record(out, (x,), _backward)
    return out


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Adam with bias correction; moment state is kept per parameter tensor."""

    def __init__(self, params: Sequence[Tensor], learning_rate: float = 0.01,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif g.shape != p.data.shape:
                raise DimensionError(
                    f"gradient shape {g.shape} does not match parameter {p.data.shape}")
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * g * g
            m_hat = self._m[i] / (1.0 - self.beta1 ** t)
            v_hat = self._v[i] / (1.0 - self.beta2 ** t)
            p.data -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)

    def zero_grad(self) -> None:
        zero_grad(self.params)


def glorot_uniform(rows: int, cols: int, rng: np.random.Generator) -> Tensor:
    """Scaled uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-limit, limit, size=(rows, cols)))


def zeros(rows: int, cols: int) -> Tensor:
    return Tensor(np.zeros((rows, cols)))
