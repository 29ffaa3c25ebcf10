"""Flat parameter vectors with a named segment layout."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

HEADER_MAGIC = "AGSAM-PARAMS v1"


class LayoutMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    name: str
    offset: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def stop(self) -> int:
        return self.offset + self.size


@dataclass(frozen=True)
class Layout:
    segments: tuple[Segment, ...]

    def __post_init__(self):
        pos = 0
        for seg in self.segments:
            if seg.offset != pos:
                raise ValueError(f"segment {seg.name!r} starts at {seg.offset}, expected {pos}")
            pos = seg.stop

    @classmethod
    def from_shapes(cls, named_shapes: Sequence[tuple[str, Sequence[int]]]) -> "Layout":
        segs, pos = [], 0
        for name, shape in named_shapes:
            seg = Segment(name, pos, tuple(int(s) for s in shape))
            segs.append(seg)
            pos = seg.stop
        return cls(tuple(segs))

    @classmethod
    def flat(cls, n: int, name: str = "theta") -> "Layout":
        return cls.from_shapes([(name, (n,))])

    @property
    def size(self) -> int:
        return self.segments[-1].stop if self.segments else 0

    def __iter__(self) -> Iterator[Segment]:
        return iter(self.segments)


class ParamVector:
    """Contiguous float64 values plus the layout that names their segments.

    Arithmetic returns new vectors; combining vectors with different layouts
    raises ``LayoutMismatch``.
    """

    __slots__ = ("values", "layout")

    def __init__(self, values, layout: Layout | None = None):
        values = np.array(values, dtype=np.float64).reshape(-1)
        if layout is None:
            layout = Layout.flat(values.size)
        if layout.size != values.size:
            raise LayoutMismatch(f"layout covers {layout.size} values, got {values.size}")
        self.values = values
        self.layout = layout

    @classmethod
    def zeros(cls, layout: Layout) -> "ParamVector":
        return cls(np.zeros(layout.size), layout)

    def _check(self, other: "ParamVector") -> None:
        if self.layout != other.layout:
            raise LayoutMismatch("parameter vectors have different layouts")

    def _wrap(self, values: np.ndarray) -> "ParamVector":
        out = ParamVector.__new__(ParamVector)
        out.values = values
        out.layout = self.layout
        return out

    def copy(self) -> "ParamVector":
        return self._wrap(self.values.copy())

    def __len__(self) -> int:
        return self.values.size

    def __add__(self, other: "ParamVector") -> "ParamVector":
        self._check(other)
        return self._wrap(self.values + other.values)

    def __sub__(self, other: "ParamVector") -> "ParamVector":
        self._check(other)
        return self._wrap(self.values - other.values)

    def __mul__(self, scalar: float) -> "ParamVector":
        return self._wrap(self.values * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "ParamVector":
        return self._wrap(self.values / float(scalar))

    def __neg__(self) -> "ParamVector":
        return self._wrap(-self.values)

    def hadamard(self, other: "ParamVector") -> "ParamVector":
        self._check(other)
        return self._wrap(self.values * other.values)

    def abs(self) -> "ParamVector":
        return self._wrap(np.abs(self.values))

    def axpy(self, alpha: float, x: "ParamVector") -> "ParamVector":
        """Return ``self + alpha * x``."""
        self._check(x)
        return self._wrap(self.values + float(alpha) * x.values)

    def dot(self, other: "ParamVector") -> float:
        self._check(other)
        return float(np.sum(self.values * other.values))

    def norm(self) -> float:
        return math.sqrt(float(np.sum(self.values * self.values)))

    def segment(self, name: str) -> np.ndarray:
        for seg in self.layout:
            if seg.name == name:
                return self.values[seg.offset:seg.stop].reshape(seg.shape)
        raise KeyError(name)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.layout == other.layout and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"ParamVector(n={self.values.size}, segments={[s.name for s in self.layout]})"


def save_params(theta: ParamVector, path: str | Path) -> None:
    """Write a plain-text layout header followed by little-endian float64 values."""
    lines = [HEADER_MAGIC, f"segments {len(theta.layout.segments)}"]
    for seg in theta.layout:
        shape = ",".join(str(s) for s in seg.shape)
        lines.append(f"{seg.name} {seg.offset} {seg.size} {shape}")
    lines.append("end")
    header = ("\n".join(lines) + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(theta.values.astype("<f8").tobytes())


def load_params(path: str | Path) -> ParamVector:
    with open(path, "rb") as fh:
        magic = fh.readline().decode("ascii").strip()
        if magic != HEADER_MAGIC:
            raise ValueError(f"{path}: not a parameter checkpoint (header {magic!r})")
        count = int(fh.readline().decode("ascii").split()[1])
        shapes = []
        for _ in range(count):
            name, _offset, _size, shape = fh.readline().decode("ascii").split()
            shapes.append((name, tuple(int(s) for s in shape.split(","))))
        if fh.readline().decode("ascii").strip() != "end":
            raise ValueError(f"{path}: malformed checkpoint header")
        layout = Layout.from_shapes(shapes)
        values = np.frombuffer(fh.read(), dtype="<f8")
    if values.size != layout.size:
        raise ValueError(f"{path}: expected {layout.size} values, found {values.size}")
    return ParamVector(values.astype(np.float64), layout)
