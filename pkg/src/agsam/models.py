"""MLP classifiers evaluated over a flat parameter vector."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .params import Layout, ParamVector
from .rng import SplitMix64

ACTIVATIONS = {"relu": ad.relu, "tanh": ad.tanh}


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple[int, ...]
    activation: str = "relu"
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ValueError("an MLP needs at least an input and an output width")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError(f"layer widths must be >= 1, got {self.layer_widths}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; expected relu or tanh")

    @property
    def n_inputs(self) -> int:
        return self.layer_widths[0]

    @property
    def n_classes(self) -> int:
        return self.layer_widths[-1]

    def layout(self) -> Layout:
        shapes = []
        for i, (fan_in, fan_out) in enumerate(zip(self.layer_widths, self.layer_widths[1:])):
            shapes.append((f"layer{i}.weight", (fan_in, fan_out)))
            shapes.append((f"layer{i}.bias", (fan_out,)))
        return Layout.from_shapes(shapes)


def init_model(spec: MlpSpec) -> ParamVector:
    """Uniform(-sqrt(6/fan_in), sqrt(6/fan_in)) weights, zero biases."""
    rng = SplitMix64(spec.init_seed)
    layout = spec.layout()
    values = np.zeros(layout.size)
    for seg in layout:
        if seg.name.endswith(".weight"):
            bound = math.sqrt(6.0 / seg.shape[0])
            values[seg.offset:seg.stop] = rng.uniform(-bound, bound, seg.size)
    return ParamVector(values, layout)


def logits_tensor(spec: MlpSpec, flat: ad.Tensor, features: np.ndarray) -> ad.Tensor:
    act = ACTIVATIONS[spec.activation]
    h = flat.tape.tensor(features)
    segs = spec.layout().segments
    n_layers = len(spec.layer_widths) - 1
    for i in range(n_layers):
        w_seg, b_seg = segs[2 * i], segs[2 * i + 1]
        w = ad.take(flat, w_seg.offset, w_seg.shape)
        b = ad.take(flat, b_seg.offset, b_seg.shape)
        h = ad.add(ad.matmul(h, w), b)
        if i < n_layers - 1:
            h = act(h)
    return h


def predict_logits(spec: MlpSpec, theta: ParamVector, features: np.ndarray) -> np.ndarray:
    tape = ad.Tape()
    return logits_tensor(spec, tape.tensor(theta.values), np.asarray(features, dtype=np.float64)).data


class LossEval(NamedTuple):
    loss: float
    accuracy: float
    grad: ParamVector


def _check_batch(spec: MlpSpec, batch) -> np.ndarray:
    features = np.asarray(batch.features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("batch_loss: empty batch")
    if features.shape[1] != spec.n_inputs:
        raise ValueError(f"batch_loss: batch has {features.shape[1]} features, model expects {spec.n_inputs}")
    return features


def accuracy(logits: np.ndarray, labels) -> float:
    # np.argmax returns the lowest index among ties
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))


def batch_loss(spec: MlpSpec, theta: ParamVector, batch) -> LossEval:
    """Mean cross-entropy, accuracy and gradient of the MLP on ``batch``."""
    features = _check_batch(spec, batch)
    tape = ad.Tape()
    flat = tape.param(theta.values)
    logits = logits_tensor(spec, flat, features)
    loss = ad.softmax_cross_entropy(logits, batch.labels)
    ad.backward(loss)
    return LossEval(loss.item(), accuracy(logits.data, batch.labels), ParamVector(flat.grad, theta.layout))


def evaluate(spec: MlpSpec, theta: ParamVector, batch) -> tuple[float, float]:
    """Loss and accuracy without building gradients."""
    features = _check_batch(spec, batch)
    tape = ad.Tape()
    logits = logits_tensor(spec, tape.tensor(theta.values), features)
    loss = ad.softmax_cross_entropy(logits, batch.labels)
    return loss.item(), accuracy(logits.data, batch.labels)


class MlpLoss:
    """``loss_fn(theta, batch) -> LossEval`` bound to one architecture."""

    def __init__(self, spec: MlpSpec):
        self.spec = spec

    def __call__(self, theta: ParamVector, batch) -> LossEval:
        return batch_loss(self.spec, theta, batch)

    def on(self, batch) -> "FixedBatchObjective":
        return FixedBatchObjective(self, batch)


class FixedBatchObjective:
    """A loss function frozen on one batch: ``value(theta)`` and ``grad(theta)``."""

    def __init__(self, loss_fn, batch):
        self.loss_fn = loss_fn
        self.batch = batch

    def value(self, theta: ParamVector) -> float:
        return self.loss_fn(theta, self.batch).loss

    def grad(self, theta: ParamVector) -> ParamVector:
        return self.loss_fn(theta, self.batch).grad
