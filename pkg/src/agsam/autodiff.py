"""Reverse-mode autodiff over dense float64 arrays.

Each graph lives on an explicit ``Tape``. Operations append their output node
to the tape of their inputs, so the tape's creation order is a topological
order and ``backward`` is a single reverse sweep.

    tape = Tape()
    w = tape.param([3.0, 4.0])
    loss = scale(sum_(mul(w, w)), 0.5)
    backward(loss)
    w.grad  # array([3., 4.])
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np

from .params import ParamVector


class ShapeError(ValueError):
    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        joined = " and ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class Tape:
    """Ordered record of graph nodes; not shared between threads."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def tensor(self, data, requires_grad: bool = False) -> "Tensor":
        t = Tensor(data, requires_grad=requires_grad, tape=self)
        self.nodes.append(t)
        return t

    def param(self, data) -> "Tensor":
        return self.tensor(data, requires_grad=True)

    def __len__(self) -> int:
        return len(self.nodes)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "tape", "op", "parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, tape: Optional[Tape] = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.tape = tape
        self.op = "leaf"
        self.parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64).reshape(self.data.shape)
        else:
            self.grad = self.grad + g

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op})"


def _tape_of(*tensors: Tensor) -> Optional[Tape]:
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ValueError("tensors belong to different tapes")
            tape = t.tape
    return tape


def _node(op: str, data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    tape = _tape_of(*parents)
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents), tape=tape)
    out.op = op
    if out.requires_grad:
        out.parents = tuple(parents)
        out._backward = backward
        if tape is not None:
            tape.nodes.append(out)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    A, B = a.data, b.data

    def backward(g):
        if a.requires_grad:
            if A.ndim == 2 and B.ndim == 2:
                a._accumulate(g @ B.T)
            elif A.ndim == 2:
                a._accumulate(np.outer(g, B))
            else:
                a._accumulate(B @ g if B.ndim == 2 else g * B)
        if b.requires_grad:
            if A.ndim == 2:
                b._accumulate(A.T @ g)
            else:
                b._accumulate(np.outer(A, g) if B.ndim == 2 else g * A)

    return _node("matmul", A @ B, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a row broadcast over the leading batch axis."""
    if a.shape == b.shape:
        broadcast = False
    elif a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        broadcast = True
    else:
        raise ShapeError("add", a.shape, b.shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0) if broadcast else g)

    return _node("add", a.data + b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("mul", a.shape, b.shape)
    A, B = a.data, b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * B)
        if b.requires_grad:
            b._accumulate(g * A)

    return _node("mul", A * B, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node("scale", a.data * c, (a,), lambda g: a._accumulate(g * c))


def sum_(a: Tensor) -> Tensor:
    return _node("sum", np.array(np.sum(a.data)), (a,),
                 lambda g: a._accumulate(np.full(a.shape, float(g))))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _node("relu", np.where(mask, a.data, 0.0), (a,), lambda g: a._accumulate(g * mask))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _node("tanh", out, (a,), lambda g: a._accumulate(g * (1.0 - out * out)))


def take(a: Tensor, start: int, shape: Sequence[int]) -> Tensor:
    """View ``prod(shape)`` consecutive entries of a flat tensor as ``shape``."""
    shape = tuple(int(s) for s in shape)
    stop = start + math.prod(shape)
    if a.data.ndim != 1 or start < 0 or stop > a.shape[0]:
        raise ShapeError("take", a.shape, shape)

    def backward(g):
        full = np.zeros(a.shape)
        full[start:stop] = g.reshape(-1)
        a._accumulate(full)

    return _node("take", a.data[start:stop].reshape(shape), (a,), backward)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of integer ``labels`` under ``logits`` of shape (batch, classes)."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError("softmax_cross_entropy", logits.shape, labels.shape)
    n, c = logits.shape
    if n == 0:
        raise ValueError("softmax_cross_entropy: empty batch")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"softmax_cross_entropy: labels must lie in [0, {c})")
    z = logits.data
    shifted = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.sum(np.exp(shifted), axis=1))
    rows = np.arange(n)
    per_sample = logsumexp - shifted[rows, labels]
    probs = np.exp(shifted - logsumexp[:, None])

    def backward(g):
        d = probs.copy()
        d[rows, labels] -= 1.0
        logits._accumulate(d * (float(g) / n))

    return _node("softmax_cross_entropy", np.array(np.sum(per_sample) / n), (logits,), backward)


def backward(loss: Tensor) -> None:
    """Propagate d(loss)/d(node) to every node on the loss's tape."""
    if loss.data.ndim != 0:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.tape is None:
        raise ValueError("loss is not recorded on a tape")
    nodes = loss.tape.nodes
    if loss.requires_grad:
        end = next((i for i in range(len(nodes) - 1, -1, -1) if nodes[i] is loss), None)
        if end is None:
            raise ValueError("loss is not recorded on this tape")
        loss.grad = np.array(1.0)
        for node in reversed(nodes[: end + 1]):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)
    for node in nodes:
        if node.op == "leaf" and node.requires_grad and node.grad is None:
            node.grad = np.zeros_like(node.data)


def gradient(loss_fn: Callable[[Tensor], Tensor], theta: ParamVector) -> tuple[float, ParamVector]:
    """Value and gradient of a scalar function of the flat parameter tensor."""
    tape = Tape()
    leaf = tape.param(theta.values)
    loss = loss_fn(leaf)
    backward(loss)
    grad = leaf.grad if leaf.grad is not None else np.zeros_like(theta.values)
    return loss.item(), ParamVector(grad, theta.layout)


def hvp(loss_fn, theta: ParamVector, v: ParamVector) -> ParamVector:
    """H(theta) @ v for a scalar ``loss_fn`` of the flat parameter tensor.

    Uses central differences of autodiff gradients with step
    ``h = sqrt(eps) * (1 + |theta|) / |v|``; exact up to rounding on quadratics.
    """
    return hvp_from_grad(lambda p: gradient(loss_fn, p)[1], theta, v)


def hvp_from_grad(grad_fn: Callable[[ParamVector], ParamVector], theta: ParamVector,
                  v: ParamVector) -> ParamVector:
    vnorm = v.norm()
    if vnorm == 0.0:
        raise ValueError("hvp: direction has zero norm")
    h = math.sqrt(2.0 ** -52) * (1.0 + theta.norm()) / vnorm
    plus = grad_fn(theta.axpy(h, v))
    minus = grad_fn(theta.axpy(-h, v))
    return (plus - minus) / (2.0 * h)
