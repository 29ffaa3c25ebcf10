"""Synthetic datasets, symmetric label noise and train/validation batch sampling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import SplitMix64

DATASET_KINDS = ("two_moons", "blobs", "spirals")
SPLIT_MODES = ("batch_split", "non_overlap", "duplicated")


@dataclass(frozen=True)
class Batch:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.labels) < 1:
            raise ValueError("a batch needs at least one row")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    seed: int = 0
    num_classes: int = 0

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or features.shape[0] != labels.shape[0] or labels.shape[0] < 1:
            raise ValueError("dataset needs N >= 1 rows with one label each")
        num_classes = self.num_classes or int(labels.max()) + 1
        if labels.min() < 0 or labels.max() >= num_classes:
            raise ValueError(f"labels must lie in [0, {num_classes})")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "num_classes", num_classes)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def rows(self, idx) -> Batch:
        idx = np.asarray(idx, dtype=np.int64)
        return Batch(self.features[idx], self.labels[idx])

    def as_batch(self) -> Batch:
        return Batch(self.features, self.labels)


def make_dataset(kind: str, n: int, noise_std: float, seed: int, *,
                 num_classes: int = 3, center_radius: float = 5.0) -> Dataset:
    """Deterministic 2-D toy classification data.

    ``two_moons`` and ``spirals`` are binary; ``blobs`` places ``num_classes``
    isotropic Gaussians on a circle of radius ``center_radius``.
    """
    if n < 2:
        raise ValueError(f"make_dataset needs n >= 2, got {n}")
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    rng = SplitMix64(seed)
    if kind == "two_moons":
        n0 = (n + 1) // 2
        n1 = n - n0
        t0 = np.linspace(0.0, math.pi, n0)
        t1 = np.linspace(0.0, math.pi, n1)
        x = np.concatenate([np.stack([np.cos(t0), np.sin(t0)], axis=1),
                            np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)])
        y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
        classes = 2
    elif kind == "spirals":
        n0 = (n + 1) // 2
        n1 = n - n0
        arms = []
        for cls, count in enumerate((n0, n1)):
            t = np.linspace(0.25 * math.pi, 3.0 * math.pi, count)
            r = t / (3.0 * math.pi)
            angle = t + cls * math.pi
            arms.append(np.stack([r * np.cos(angle), r * np.sin(angle)], axis=1))
        x = np.concatenate(arms)
        y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
        classes = 2
    elif kind == "blobs":
        if num_classes < 1:
            raise ValueError("blobs needs num_classes >= 1")
        y = np.arange(n, dtype=np.int64) % num_classes
        angles = 2.0 * math.pi * np.arange(num_classes) / num_classes
        centers = center_radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        x = centers[y]
        classes = num_classes
    else:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {DATASET_KINDS}")
    if noise_std > 0:
        x = x + noise_std * rng.normal(x.size).reshape(x.shape)
    order = rng.child("order").permutation(n)
    return Dataset(x[order], y[order], name=kind, seed=seed, num_classes=classes)


def inject_label_noise(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Symmetric noise: flip exactly round-half-up(fraction * N) labels to a different class."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"noise fraction must lie in [0, 1], got {fraction}")
    count = int(math.floor(fraction * len(ds) + 0.5))
    if count == 0:
        return ds
    if ds.num_classes < 2:
        raise ValueError("label noise needs at least two classes")
    rng = SplitMix64(seed)
    chosen = np.sort(rng.sample(len(ds), count))
    labels = ds.labels.copy()
    for i in chosen:
        old = int(labels[i])
        # uniform over the other C-1 classes
        new = rng.randbelow(ds.num_classes - 1)
        labels[i] = new + 1 if new >= old else new
    return Dataset(ds.features, labels, name=f"{ds.name}+noise{fraction}", seed=ds.seed,
                   num_classes=ds.num_classes)


def noise_manifest(original: Dataset, noisy: Dataset) -> list[tuple[int, int, int]]:
    """(index, old_label, new_label) for every row whose label differs."""
    changed = np.flatnonzero(original.labels != noisy.labels)
    return [(int(i), int(original.labels[i]), int(noisy.labels[i])) for i in changed]


@dataclass(frozen=True)
class SplitStrategy:
    mode: str = "duplicated"
    ratio: float = 0.7
    val_fraction: float = 0.25  # |B^v| = ceil(val_fraction * |B^t|)

    def __post_init__(self):
        if self.mode not in SPLIT_MODES:
            raise ValueError(f"unknown split mode {self.mode!r}; expected one of {SPLIT_MODES}")
        if self.mode != "duplicated" and not 0.0 < self.ratio < 1.0:
            raise ValueError(f"split ratio must lie in (0, 1), got {self.ratio}")
        if not 0.0 < self.val_fraction <= 1.0:
            raise ValueError(f"val_fraction must lie in (0, 1], got {self.val_fraction}")


@dataclass
class BatchSampler:
    """Draws (B^t, B^v) pairs; one sampler per run.

    B^t rows are drawn without replacement within an epoch (the epoch is a
    fresh permutation of the training pool, trailing partial batch dropped).
    B^v is an independent draw each step, distinct rows within the batch.
    """

    dataset: Dataset
    strategy: SplitStrategy
    batch_size: int
    rng: SplitMix64
    train_pool: np.ndarray = field(init=False)
    val_pool: np.ndarray = field(init=False)
    _order: np.ndarray = field(init=False, repr=False)
    _cursor: int = field(init=False, default=0)
    epoch: int = field(init=False, default=0)

    def __post_init__(self):
        n = len(self.dataset)
        if not 1 <= self.batch_size <= n:
            raise ValueError(f"batch size must lie in [1, {n}], got {self.batch_size}")
        mode = self.strategy.mode
        if mode == "non_overlap":
            perm = self.rng.child("partition").permutation(n)
            cut = math.ceil(self.strategy.ratio * n)
            self.train_pool, self.val_pool = np.sort(perm[:cut]), np.sort(perm[cut:])
            if len(self.val_pool) == 0 or len(self.train_pool) == 0:
                raise ValueError("non_overlap split leaves an empty partition")
            if self.batch_size > len(self.train_pool):
                raise ValueError(f"batch size {self.batch_size} exceeds the {len(self.train_pool)}-row training partition")
        else:
            self.train_pool = self.val_pool = np.arange(n)
        if mode == "batch_split":
            n_t = math.ceil(self.strategy.ratio * self.batch_size)
            if n_t < 1 or n_t >= self.batch_size:
                raise ValueError(f"batch_split of {self.batch_size} rows at r={self.strategy.ratio} leaves an empty part")
        self._shuffle = self.rng.child("epochs")
        self._val_rng = self.rng.child("validation")
        self._order = self._shuffle.permutation(len(self.train_pool))
        self._cursor = 0

    @property
    def steps_per_epoch(self) -> int:
        return len(self.train_pool) // self.batch_size

    @property
    def val_batch_size(self) -> int:
        if self.strategy.mode == "batch_split":
            return self.batch_size - math.ceil(self.strategy.ratio * self.batch_size)
        return min(math.ceil(self.strategy.val_fraction * self.batch_size), len(self.val_pool))

    def _next_train_indices(self) -> np.ndarray:
        if self._cursor + self.batch_size > len(self._order):
            self._order = self._shuffle.permutation(len(self.train_pool))
            self._cursor = 0
            self.epoch += 1
        idx = self.train_pool[self._order[self._cursor:self._cursor + self.batch_size]]
        self._cursor += self.batch_size
        return idx

    def next_indices(self) -> tuple[np.ndarray, np.ndarray]:
        idx = self._next_train_indices()
        if self.strategy.mode == "batch_split":
            n_t = math.ceil(self.strategy.ratio * len(idx))
            return idx[:n_t], idx[n_t:]
        pick = self._val_rng.sample(len(self.val_pool), self.val_batch_size)
        return idx, self.val_pool[pick]

    def next_batches(self) -> tuple[Batch, Batch]:
        it, iv = self.next_indices()
        return self.dataset.rows(it), self.dataset.rows(iv)


def next_batches(sampler: BatchSampler) -> tuple[Batch, Batch]:
    return sampler.next_batches()


def save_dataset_csv(ds: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(ds.dim)] + ["label"])
        for x, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


def load_dataset_csv(path: str | Path, name: str | None = None, num_classes: int = 0) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != "label" or header[:-1] != [f"f{i}" for i in range(len(header) - 1)]:
            raise ValueError(f"{path}: header must be f0,...,f{{d-1}},label")
        rows = list(reader)
    features = np.array([[float(v) for v in r[:-1]] for r in rows], dtype=np.float64)
    labels = np.array([int(r[-1]) for r in rows], dtype=np.int64)
    return Dataset(features, labels, name=name or Path(path).stem, num_classes=num_classes)


def save_noise_manifest(original: Dataset, noisy: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "old_label", "new_label"])
        w.writerows(noise_manifest(original, noisy))
