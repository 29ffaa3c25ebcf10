"""Generalization-bound complexity term and the gradient-congruence check."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .optim import ResearchEtaConfig, StepTrace, research_eta_step
from .params import Layout, ParamVector
from .quadratic import Quadratic, quadratic_loss, random_symmetric

DENOMINATOR_GUARD = 1e-15
CONGRUENCE_RTOL = 1e-9


@dataclass(frozen=True)
class BoundInputs:
    loss_bound: float  # L: sup of the per-sample loss
    n_val: int
    model_size: int
    rho: float
    theta_norm_sq: float
    delta: float

    def __post_init__(self):
        if not self.loss_bound > 0:
            raise ValueError("loss bound L must be positive")
        if self.n_val < 1 or self.model_size < 1:
            raise ValueError("N_v and k must be positive integers")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.theta_norm_sq < 0:
            raise ValueError("|theta|^2 must be nonnegative")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


def pac_bayes_complexity(inp: BoundInputs, o1_constant: float = 1.0) -> float:
    """Additive complexity term of the sharpness bound over a validation set::

        4L/sqrt(N) * [ sqrt(k log(1 + |theta|^2/rho^2 (1 + sqrt(log N / k))^2))
                       + 2 sqrt(log((N + k)/delta)) + C0 ]

    ``C0`` stands in for the unspecified O(1) constant.
    """
    n, k = inp.n_val, inp.model_size
    growth = (1.0 + math.sqrt(math.log(n) / k)) ** 2
    kl_term = math.sqrt(k * math.log1p(inp.theta_norm_sq / inp.rho ** 2 * growth))
    conf_term = 2.0 * math.sqrt(math.log((n + k) / inp.delta))
    return 4.0 * inp.loss_bound / math.sqrt(n) * (kl_term + conf_term + o1_constant)


class HvpOracle(NamedTuple):
    """Hessian-vector products of the training loss at theta and the validation loss at theta_v."""

    train: Callable[[ParamVector], ParamVector]
    val: Callable[[ParamVector], ParamVector]


@dataclass(frozen=True)
class CongruenceCaps:
    eta1_cap: Optional[float]
    eta2_cap: Optional[float]
    dot_before: float
    dot_after: float
    bound_rhs: float
    satisfied: bool


def _cap(numerator: float, denominator: float) -> float:
    return math.inf if denominator < DENOMINATOR_GUARD else numerator / denominator


def _require(trace: StepTrace, *names: str) -> None:
    missing = [n for n in names if getattr(trace, n, None) is None]
    if missing:
        raise ValueError(f"step trace lacks {', '.join(missing)}")


def step_size_caps(trace: StepTrace, hvp: HvpOracle) -> tuple[float, float]:
    """Largest eta1 and eta2 for which the congruence inequality is guaranteed."""
    _require(trace, "grad_t", "grad_v_pert", "theta_v")
    gt, gv = trace.grad_t, trace.grad_v_pert
    dot = abs(gt.dot(gv))
    ht_gt = hvp.train(gt)
    ht_gv = hvp.train(gv)
    hv_gt = hvp.val(gt)
    eta1 = _cap(dot, 12.0 * abs(gv.dot(ht_gt)))
    eta2 = min(_cap(dot, 6.0 * abs(gv.dot(ht_gv))), _cap(dot, 6.0 * abs(gv.dot(hv_gt))))
    return eta1, eta2


def verify_congruence(trace: StepTrace, hvp: Optional[HvpOracle] = None) -> CongruenceCaps:
    """Check dLt(theta_t).dLv(theta_v) >= c * dLt(theta).dLv(theta_v), c = 1/2 or 3/2 by sign."""
    _require(trace, "grad_t", "grad_v_pert", "grad_t_pert")
    before = trace.grad_t.dot(trace.grad_v_pert)
    after = trace.grad_t_pert.dot(trace.grad_v_pert)
    rhs = 0.5 * before if before >= 0 else 1.5 * before
    satisfied = after >= rhs - CONGRUENCE_RTOL * abs(rhs)
    eta1 = eta2 = None
    if hvp is not None:
        eta1, eta2 = step_size_caps(trace, hvp)
    return CongruenceCaps(eta1, eta2, before, after, rhs, bool(satisfied))


def theorem2_caps(trace: StepTrace, hvp: HvpOracle) -> CongruenceCaps:
    return verify_congruence(trace, hvp)


def quadratic_oracle(train: Quadratic, val: Quadratic) -> HvpOracle:
    return HvpOracle(train.hvp, val.hvp)


@dataclass(frozen=True)
class CongruenceInstance:
    index: int
    dim: int
    hessian_kind: str
    eta1: float
    eta2: float
    eta1_cap: float
    eta2_cap: float
    dot_before: float
    dot_after: float
    bound_rhs: float
    satisfied: bool

    def describe(self) -> str:
        return ", ".join(f"{k}={v!r}" for k, v in asdict(self).items())


def _half_cap(cap: float) -> float:
    return 1.0 if math.isinf(cap) else cap / 2.0


def choose_step_sizes(theta: ParamVector, train: Quadratic, val: Quadratic,
                      iterations: int = 30) -> tuple[float, float, float, float]:
    """Find (eta1, eta2) at half their caps.

    The eta2 cap depends on eta2 itself through theta_v, so eta2 is iterated
    to a fixed point of ``eta2 = cap(eta2) / 2`` and then halved until it
    satisfies its own cap.
    """
    oracle = quadratic_oracle(train, val)

    def caps_at(eta2: float) -> tuple[float, float]:
        _, trace = research_eta_step(ResearchEtaConfig(0.0, eta2, 1.0), theta, train, val, quadratic_loss)
        return step_size_caps(trace, oracle)

    eta2 = 1e-3
    for _ in range(iterations):
        eta2 = _half_cap(caps_at(eta2)[1])
    cap1, cap2 = caps_at(eta2)
    while eta2 > cap2:
        eta2 /= 2.0
        cap1, cap2 = caps_at(eta2)
    return _half_cap(cap1), eta2, cap1, cap2


def random_congruence_instance(index: int, seed: int = 0) -> tuple[ParamVector, Quadratic, Quadratic, str]:
    rng = np.random.default_rng([seed, index])
    dim = int(rng.integers(2, 11))
    kind = ("spd", "indefinite")[index % 2]
    train = Quadratic(random_symmetric(rng, dim, kind), rng.standard_normal(dim))
    val = Quadratic(random_symmetric(rng, dim, kind), rng.standard_normal(dim))
    theta = ParamVector(rng.standard_normal(dim), Layout.flat(dim))
    return theta, train, val, kind


def run_congruence_instance(index: int, seed: int = 0) -> CongruenceInstance:
    theta, train, val, kind = random_congruence_instance(index, seed)
    eta1, eta2, _, _ = choose_step_sizes(theta, train, val)
    _, trace = research_eta_step(ResearchEtaConfig(eta1, eta2, 0.1), theta, train, val, quadratic_loss)
    res = verify_congruence(trace, quadratic_oracle(train, val))
    ok = res.satisfied and eta1 <= res.eta1_cap and eta2 <= res.eta2_cap
    return CongruenceInstance(index, theta.values.size, kind, eta1, eta2, res.eta1_cap, res.eta2_cap,
                              res.dot_before, res.dot_after, res.bound_rhs, ok)


def congruence_suite(instances: int = 100, seed: int = 0) -> list[CongruenceInstance]:
    return [run_congruence_instance(i, seed) for i in range(instances)]


BASE_BOUND = dict(loss_bound=1.0, n_val=1000, model_size=10, rho=0.05, theta_norm_sq=100.0, delta=0.1)
MONOTONE_GRIDS = {
    # axis: (grid values, +1 if the term must increase along the grid, -1 if decrease)
    "n_val": ((250, 500, 1000, 2000, 4000), -1),
    "model_size": ((5, 10, 20, 40, 80), +1),
    "loss_bound": ((0.5, 1.0, 2.0, 4.0, 8.0), +1),
    "theta_norm_sq": ((1.0, 10.0, 100.0, 1000.0, 10000.0), +1),
    "delta": ((0.5, 0.2, 0.1, 0.05, 0.01), +1),
}


@dataclass(frozen=True)
class MonotonicityResult:
    axis: str
    values: tuple
    outputs: tuple[float, ...]
    passed: bool


def monotonicity_suite(base: Optional[dict] = None, grids: Optional[dict] = None) -> list[MonotonicityResult]:
    """Evaluate the complexity term along each axis grid and check strict monotonicity."""
    base = dict(BASE_BOUND if base is None else base)
    results = []
    for axis, (values, sign) in (grids or MONOTONE_GRIDS).items():
        outs = tuple(pac_bayes_complexity(BoundInputs(**{**base, axis: v})) for v in values)
        passed = all(sign * (b - a) > 0 for a, b in zip(outs, outs[1:]))
        results.append(MonotonicityResult(axis, tuple(values), outs, passed))
    return results


def monotonicity_cube(points: int = 5) -> tuple[int, int]:
    """Pairwise checks over an N_v x k x |theta|^2 grid; returns (passed, total)."""
    n_vals = [500 * 2 ** i for i in range(points)]
    ks = [10 * 2 ** i for i in range(points)]
    norms = [10.0 ** i for i in range(points)]
    passed = total = 0
    for n, k, t in itertools.product(n_vals, ks, norms):
        here = pac_bayes_complexity(BoundInputs(1.0, n, k, 0.05, t, 0.1))
        for axis, step, sign in (("n_val", n * 2, -1), ("model_size", k * 2, +1), ("theta_norm_sq", t * 10, +1)):
            args = dict(loss_bound=1.0, n_val=n, model_size=k, rho=0.05, theta_norm_sq=t, delta=0.1)
            args[axis] = step
            total += 1
            passed += sign * (pac_bayes_complexity(BoundInputs(**args)) - here) > 0
    return passed, total
