"""SGD, SAM, ASAM and Agnostic-SAM steps over flat parameter vectors.

Every step takes a ``loss_fn(theta, batch) -> LossEval`` and returns the new
parameters together with a ``StepTrace`` of the points and gradients it
visited, which the theory and metrics code consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .models import LossEval
from .params import LayoutMismatch, ParamVector

GRAD_NORM_GUARD = 1e-12

LossFn = Callable[[ParamVector, object], LossEval]


@dataclass(frozen=True)
class SgdConfig:
    lr: float
    momentum: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be nonnegative, got {self.weight_decay}")


@dataclass(frozen=True)
class SamConfig:
    rho: float
    base: SgdConfig
    adaptive: bool = False
    # rho == 0 is only accepted when explicitly requested (reduction tests)
    allow_zero_rho: bool = field(default=False, repr=False)

    def __post_init__(self):
        if not (self.rho > 0 or (self.allow_zero_rho and self.rho == 0)):
            raise ValueError(f"rho must be positive, got {self.rho}")


@dataclass(frozen=True)
class AgnosticSamConfig:
    rho1: float
    rho2: float
    base: SgdConfig
    beta: float = 0.9
    adaptive: bool = False
    variant: str = "full"

    def __post_init__(self):
        if not self.rho1 > 0:
            raise ValueError(f"rho1 must be positive, got {self.rho1}")
        if self.rho2 < 0:
            raise ValueError(f"rho2 must be nonnegative, got {self.rho2}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.variant not in ("full", "simpler"):
            raise ValueError(f"variant must be 'full' or 'simpler', got {self.variant!r}")


@dataclass(frozen=True)
class ResearchEtaConfig:
    eta1: float
    eta2: float
    eta: float

    def __post_init__(self):
        if self.eta1 < 0 or self.eta2 < 0 or not self.eta > 0:
            raise ValueError(f"need eta1, eta2 >= 0 and eta > 0, got {self.eta1}, {self.eta2}, {self.eta}")


@dataclass
class OptimizerState:
    momentum_buffer: Optional[ParamVector] = None
    g_v: Optional[ParamVector] = None
    step_count: int = 0


@dataclass
class StepTrace:
    """Points and gradients visited by one optimizer step.

    ``grad_t`` is the training-batch gradient at ``theta``; ``grad_v_pert`` the
    validation-batch gradient at ``theta_v``; ``grad_t_pert`` the training-batch
    gradient at ``theta_t``, which drives the update.
    """

    theta: ParamVector
    loss: float
    accuracy: float
    grad_t: ParamVector
    theta_t: ParamVector
    grad_t_pert: ParamVector
    theta_next: Optional[ParamVector] = None
    grad_v: Optional[ParamVector] = None
    theta_v: Optional[ParamVector] = None
    grad_v_pert: Optional[ParamVector] = None
    g_v: Optional[ParamVector] = None


def cosine_lr(eta0: float, t: int, total: int) -> float:
    if total < 1 or t < 0:
        raise ValueError(f"cosine_lr needs 0 <= t and total >= 1, got t={t}, total={total}")
    if t > total:
        raise ValueError(f"step {t} is past the end of the {total}-step schedule")
    return eta0 * 0.5 * (1.0 + math.cos(math.pi * t / total))


def sgd_step(state: OptimizerState, cfg: SgdConfig, theta: ParamVector, grad: ParamVector,
             lr: Optional[float] = None) -> ParamVector:
    """buf <- momentum * buf + grad + weight_decay * theta;  theta <- theta - lr * buf."""
    if grad.layout != theta.layout:
        raise LayoutMismatch("gradient layout does not match parameters")
    d = grad.axpy(cfg.weight_decay, theta) if cfg.weight_decay else grad
    buf = state.momentum_buffer
    if buf is None:
        buf = ParamVector.zeros(theta.layout)
    buf = (buf * cfg.momentum) + d
    state.momentum_buffer = buf
    state.step_count += 1
    return theta.axpy(-(cfg.lr if lr is None else lr), buf)


def _scaled_direction(theta: ParamVector, grad: ParamVector, adaptive: bool) -> Optional[ParamVector]:
    """Unit-radius SAM direction g/|g| (or T^2 g/|T g| with T=|theta|); None below the guard."""
    if adaptive:
        t = theta.abs()
        tg = t.hadamard(grad)
        n = tg.norm()
        if n < GRAD_NORM_GUARD:
            return None
        return t.hadamard(tg) / n
    n = grad.norm()
    if n < GRAD_NORM_GUARD:
        return None
    return grad / n


def sam_perturb(theta: ParamVector, grad: ParamVector, rho: float, adaptive: bool = False) -> ParamVector:
    direction = _scaled_direction(theta, grad, adaptive)
    if direction is None:
        return theta
    return theta.axpy(rho, direction)


def sam_step(state: OptimizerState, cfg: SamConfig, theta: ParamVector, batch, loss_fn: LossFn,
             lr: Optional[float] = None) -> tuple[ParamVector, StepTrace]:
    first = loss_fn(theta, batch)
    theta_t = sam_perturb(theta, first.grad, cfg.rho, cfg.adaptive)
    second = loss_fn(theta_t, batch).grad
    new = sgd_step(state, cfg.base, theta, second, lr)
    return new, StepTrace(theta, first.loss, first.accuracy, first.grad, theta_t, second, theta_next=new)


def sgd_train_step(state: OptimizerState, cfg: SgdConfig, theta: ParamVector, batch, loss_fn: LossFn,
                   lr: Optional[float] = None) -> tuple[ParamVector, StepTrace]:
    ev = loss_fn(theta, batch)
    new = sgd_step(state, cfg, theta, ev.grad, lr)
    return new, StepTrace(theta, ev.loss, ev.accuracy, ev.grad, theta, ev.grad, theta_next=new)


def _require_nonempty(batch, name: str) -> None:
    if hasattr(batch, "__len__") and len(batch) == 0:
        raise ValueError(f"{name} is empty")


def agnostic_sam_step(state: OptimizerState, cfg: AgnosticSamConfig, theta: ParamVector, bt, bv,
                      loss_fn: LossFn, lr: Optional[float] = None) -> tuple[ParamVector, StepTrace]:
    _require_nonempty(bt, "training batch")
    _require_nonempty(bv, "validation batch")
    train = loss_fn(theta, bt)
    grad_v = loss_fn(theta, bv).grad
    theta_v = grad_v_pert = None
    if cfg.variant == "full":
        theta_v = sam_perturb(theta, grad_v, cfg.rho2, cfg.adaptive)
        grad_v_pert = loss_fn(theta_v, bv).grad
        g_v = state.g_v if state.g_v is not None else ParamVector.zeros(theta.layout)
        state.g_v = (g_v * cfg.beta) + (grad_v_pert * (1.0 - cfg.beta))
        injected = state.g_v
    else:
        injected = grad_v

    theta_t = sam_perturb(theta, train.grad, cfg.rho1, cfg.adaptive)
    if cfg.rho2 != 0:
        descent = _scaled_direction(theta, injected, cfg.adaptive)
        if descent is not None:
            theta_t = theta_t.axpy(-cfg.rho2, descent)
    grad_t_pert = loss_fn(theta_t, bt).grad
    new = sgd_step(state, cfg.base, theta, grad_t_pert, lr)
    trace = StepTrace(theta, train.loss, train.accuracy, train.grad, theta_t, grad_t_pert, theta_next=new,
                      grad_v=grad_v, theta_v=theta_v, grad_v_pert=grad_v_pert, g_v=state.g_v)
    return new, trace


def research_eta_step(cfg: ResearchEtaConfig, theta: ParamVector, bt, bv,
                      loss_fn: LossFn) -> tuple[ParamVector, StepTrace]:
    """Unnormalized two-batch update with scalar rates eta1, eta2, eta::

        theta_v = theta + eta2 * dLv(theta)
        theta_t = theta + eta1 * dLt(theta) - eta2 * dLv(theta_v)
        theta'  = theta - eta * dLt(theta_t)
    """
    train = loss_fn(theta, bt)
    grad_v = loss_fn(theta, bv).grad
    theta_v = theta.axpy(cfg.eta2, grad_v)
    grad_v_pert = loss_fn(theta_v, bv).grad
    theta_t = theta.axpy(cfg.eta1, train.grad).axpy(-cfg.eta2, grad_v_pert)
    grad_t_pert = loss_fn(theta_t, bt).grad
    new = theta.axpy(-cfg.eta, grad_t_pert)
    trace = StepTrace(theta, train.loss, train.accuracy, train.grad, theta_t, grad_t_pert, theta_next=new,
                      grad_v=grad_v, theta_v=theta_v, grad_v_pert=grad_v_pert)
    return new, trace


def validation_probe(theta: ParamVector, bv, rho: float, loss_fn: LossFn,
                     adaptive: bool = False) -> tuple[ParamVector, ParamVector]:
    """(theta_v, dLv(theta_v)) with theta_v the rho-normalized ascent point on ``bv``.

    Lets runs of optimizers that never look at a validation batch report the
    same gradient-alignment diagnostics as Agnostic-SAM.
    """
    theta_v = sam_perturb(theta, loss_fn(theta, bv).grad, rho, adaptive)
    return theta_v, loss_fn(theta_v, bv).grad
