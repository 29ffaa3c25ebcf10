"""Quadratic objectives ``0.5 x'Ax + b'x + c`` with exact gradients and Hessians.

A ``Quadratic`` plays the role of a batch: ``quadratic_loss(theta, q)`` has the
same ``loss_fn(theta, batch)`` signature the optimizers use for MLPs, which
lets the theory checks run the real optimizer code on losses whose Hessians
are known exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import LossEval
from .params import Layout, ParamVector


@dataclass(frozen=True, eq=False)
class Quadratic:
    A: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
            raise ValueError(f"quadratic needs square A and matching b, got {A.shape} and {b.shape}")
        if not np.array_equal(A, A.T):
            raise ValueError("quadratic Hessian must be symmetric")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def isotropic(cls, dim: int) -> "Quadratic":
        return cls(np.eye(dim), np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def __len__(self) -> int:
        return 1

    def value(self, theta: ParamVector) -> float:
        x = theta.values
        return float(0.5 * x @ self.A @ x + self.b @ x + self.c)

    def grad(self, theta: ParamVector) -> ParamVector:
        return ParamVector(self.A @ theta.values + self.b, theta.layout)

    def hvp(self, v: ParamVector) -> ParamVector:
        return ParamVector(self.A @ v.values, v.layout)

    def evaluate(self, theta: ParamVector) -> LossEval:
        return LossEval(self.value(theta), float("nan"), self.grad(theta))

    def as_tensor_loss(self):
        """The same quadratic as a scalar function of an autodiff tensor."""
        from . import autodiff as ad

        def loss(flat):
            quad = ad.scale(ad.sum_(ad.mul(flat, ad.matmul(flat.tape.tensor(self.A), flat))), 0.5)
            lin = ad.sum_(ad.mul(flat.tape.tensor(self.b), flat))
            return ad.add(ad.add(quad, lin), flat.tape.tensor(self.c))

        return loss


def quadratic_loss(theta: ParamVector, q: Quadratic) -> LossEval:
    return q.evaluate(theta)


def random_symmetric(rng: np.random.Generator, dim: int, kind: str = "spd") -> np.ndarray:
    """Random symmetric matrix: 'spd', 'indefinite', or 'gaussian' (GOE-style)."""
    if kind == "gaussian":
        m = rng.standard_normal((dim, dim))
        return (m + m.T) / 2.0
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    if kind == "spd":
        eig = rng.uniform(0.1, 5.0, dim)
    elif kind == "indefinite":
        eig = rng.uniform(0.1, 5.0, dim) * np.where(np.arange(dim) % 2 == 0, 1.0, -1.0)
    else:
        raise ValueError(f"unknown matrix kind {kind!r}")
    a = (q * eig) @ q.T
    return (a + a.T) / 2.0


def flat_layout(dim: int) -> Layout:
    return Layout.flat(dim)
