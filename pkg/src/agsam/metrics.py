"""Gradient-alignment cosines, Hessian top eigenvalues and 2-D loss slices."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .autodiff import hvp_from_grad
from .optim import StepTrace
from .params import LayoutMismatch, ParamVector
from .rng import SplitMix64

NORM_GUARD = 1e-12


def fmt(x: Optional[float]) -> str:
    """Shortest round-trip text for a float; empty for absent values."""
    return "" if x is None else repr(float(x))


def cosine(a: ParamVector, b: ParamVector) -> Optional[float]:
    if a.layout != b.layout:
        raise LayoutMismatch("cannot compare gradients with different layouts")
    na, nb = a.norm(), b.norm()
    if na < NORM_GUARD or nb < NORM_GUARD:
        return None
    return a.dot(b) / (na * nb)


def alignment(trace: StepTrace) -> Optional[float]:
    """cos(dLt(theta), dLv(theta_v)) for one step."""
    if trace.grad_v_pert is None:
        raise ValueError("step trace has no validation gradient")
    return cosine(trace.grad_t, trace.grad_v_pert)


@dataclass(frozen=True)
class CosineRecord:
    step: int
    cosine_b: Optional[float]
    cosine_a: Optional[float]
    change: Optional[float]


def cosine_metrics(trace_l: StepTrace, trace_next: StepTrace, step: int = 0) -> CosineRecord:
    """Alignment before (step l) and after (step l+1) an update, and its relative change."""
    before = alignment(trace_l)
    after = alignment(trace_next)
    change = None
    if before is not None and after is not None and abs(after) > NORM_GUARD:
        change = (after - before) / after
    return CosineRecord(step, before, after, change)


@dataclass(frozen=True)
class SpectrumRecord:
    eigenvalues: tuple[float, ...]
    iterations_used: tuple[int, ...]


def top_eigenvalues(objective, theta: ParamVector, k_top: int, *, seed: int = 0,
                    hvp: Optional[Callable[[ParamVector], ParamVector]] = None,
                    rtol: float = 1e-6, max_iter: int = 1000, extra: int = 3) -> SpectrumRecord:
    """Largest-magnitude Hessian eigenvalues by block power iteration.

    ``objective`` needs a ``grad(theta)`` method; the Hessian is applied through
    finite-difference HVPs unless an explicit ``hvp`` operator is given.

    A block of ``k_top + extra`` vectors is repeatedly multiplied by the
    Hessian and re-orthonormalized; Rayleigh-Ritz on the block gives the
    estimates, ranked by magnitude. Eigenvalue ``i`` has converged once its
    estimate moves by less than ``rtol`` (relative) between iterations and its
    Ritz residual is below ``sqrt(rtol) * |lambda|``; iteration stops when the
    first ``k_top + 1`` pairs have converged. Extra block vectors keep near-ties
    in magnitude (including opposite-sign pairs) from stalling.
    """
    dim = len(theta)
    if not 1 <= k_top <= dim:
        raise ValueError(f"k_top must lie in [1, {dim}], got {k_top}")
    if hvp is None:
        def hvp(v):
            return hvp_from_grad(objective.grad, theta, v)

    block = min(dim, k_top + extra)
    # one pair past k_top must also settle so the magnitude ranking at the cut is final
    watch = min(block, k_top + 1)
    rng = SplitMix64(seed)
    v, _ = np.linalg.qr(rng.normal(dim * block).reshape(dim, block))
    prev = None
    converged_at = [max_iter] * watch
    vals = np.zeros(block)
    for it in range(1, max_iter + 1):
        hv = np.stack([hvp(ParamVector(v[:, j], theta.layout)).values for j in range(block)], axis=1)
        t = v.T @ hv
        vals, vecs = np.linalg.eigh(0.5 * (t + t.T))
        order = np.argsort(-np.abs(vals), kind="stable")
        vals, vecs = vals[order], vecs[:, order]
        y, hy = v @ vecs, hv @ vecs
        resid = np.linalg.norm(hy - y * vals, axis=0)
        done = True
        for i in range(watch):
            tol = max(rtol * abs(vals[i]), 1e-12)
            ok = (prev is not None and abs(vals[i] - prev[i]) < tol
                  and resid[i] <= max(np.sqrt(rtol) * abs(vals[i]), 1e-12))
            if ok:
                converged_at[i] = min(converged_at[i], it)
            else:
                converged_at[i] = max_iter
                done = False
        if done:
            break
        prev = vals.copy()
        v, _ = np.linalg.qr(hy)
    return SpectrumRecord(tuple(float(x) for x in vals[:k_top]), tuple(converged_at[:k_top]))


@dataclass(frozen=True)
class LandscapeSlice:
    grid: np.ndarray  # grid[i + n, j + n] = loss at theta + u_i d1 + v_j d2
    d1: ParamVector
    d2: ParamVector
    extent: float
    resolution: int

    def coords(self) -> np.ndarray:
        n = self.resolution
        return np.arange(-n, n + 1) * (self.extent / n)

    def at(self, i: int, j: int) -> float:
        return float(self.grid[i + self.resolution, j + self.resolution])


def _segment_normalized(theta: ParamVector, raw: np.ndarray) -> np.ndarray:
    out = raw.copy()
    for seg in theta.layout:
        sl = slice(seg.offset, seg.stop)
        tn = np.linalg.norm(theta.values[sl])
        dn = np.linalg.norm(raw[sl])
        # segments with zero parameter norm (e.g. fresh biases) keep the raw draw
        if tn > NORM_GUARD and dn > NORM_GUARD:
            out[sl] = raw[sl] * (tn / dn)
    return out


def slice_directions(theta: ParamVector, seed: int, max_attempts: int = 10) -> tuple[ParamVector, ParamVector]:
    for attempt in range(max_attempts):
        rng = SplitMix64(seed + attempt)
        a = _segment_normalized(theta, rng.normal(len(theta)))
        b = _segment_normalized(theta, rng.normal(len(theta)))
        na = np.linalg.norm(a)
        if na < NORM_GUARD:
            continue
        a = a / na
        b = b - (a @ b) * a
        nb = np.linalg.norm(b)
        if nb < NORM_GUARD:
            continue
        b = b / nb
        # second pass removes residual overlap from rounding
        b = b - (a @ b) * a
        b = b / np.linalg.norm(b)
        return ParamVector(a, theta.layout), ParamVector(b, theta.layout)
    raise ValueError(f"could not draw two independent directions in {max_attempts} attempts")


def landscape_slice(objective, theta: ParamVector, extent: float, resolution: int, seed: int) -> LandscapeSlice:
    """Loss on a (2n+1) x (2n+1) grid spanning [-extent, extent]^2 in a random 2-D plane."""
    if not extent > 0:
        raise ValueError("extent must be positive")
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    d1, d2 = slice_directions(theta, seed)
    n = resolution
    step = extent / n
    grid = np.empty((2 * n + 1, 2 * n + 1))
    for i in range(-n, n + 1):
        for j in range(-n, n + 1):
            point = theta.axpy(i * step, d1).axpy(j * step, d2)
            grid[i + n, j + n] = objective.value(point)
    return LandscapeSlice(grid, d1, d2, float(extent), n)


def write_slice_csv(sl: LandscapeSlice, path: str | Path) -> None:
    n, coords = sl.resolution, sl.coords()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "u", "v", "loss"])
        for i in range(-n, n + 1):
            for j in range(-n, n + 1):
                w.writerow([i, j, fmt(coords[i + n]), fmt(coords[j + n]), fmt(sl.grid[i + n, j + n])])


def write_spectrum_csv(rec: SpectrumRecord, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "eigenvalue", "iterations"])
        for rank, (lam, it) in enumerate(zip(rec.eigenvalues, rec.iterations_used), start=1):
            w.writerow([rank, fmt(lam), it])


def write_cosine_csv(records, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "cosine_b", "cosine_a", "change"])
        for r in records:
            w.writerow([r.step, fmt(r.cosine_b), fmt(r.cosine_a), fmt(r.change)])
