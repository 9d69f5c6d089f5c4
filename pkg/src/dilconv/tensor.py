"""Dense float64 tensors.

Tensors are plain row-major ``numpy.ndarray`` objects of dtype float64; the
helpers here add the shape checks the rest of the package relies on.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import ShapeError, TensorIndexError

DTYPE = np.float64

Tensor = np.ndarray


@dataclass(frozen=True)
class Shape4:
    batch: int
    channels: int
    rows: int
    cols: int

    def __post_init__(self):
        for name in ("batch", "channels", "rows", "cols"):
            if int(getattr(self, name)) < 1:
                raise ShapeError(f"Shape4.{name} must be >= 1, got {getattr(self, name)}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.batch, self.channels, self.rows, self.cols)

    @classmethod
    def of(cls, t: Tensor) -> "Shape4":
        if t.ndim != 4:
            raise ShapeError(f"expected rank-4 tensor, got shape {t.shape}")
        return cls(*t.shape)


def _check_extents(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if len(shape) < 1:
        raise ShapeError("tensor rank must be >= 1")
    if any(s < 1 for s in shape):
        raise ShapeError(f"every extent must be >= 1, got {shape}")
    return shape


def tensor_new(shape: Sequence[int], fill: float = 0.0) -> Tensor:
    return np.full(_check_extents(shape), fill, dtype=DTYPE)


def as_tensor(data, shape: Sequence[int] | None = None) -> Tensor:
    """Copy ``data`` into a contiguous float64 tensor, optionally reshaped."""
    arr = np.array(data, dtype=DTYPE, order="C")
    if shape is not None:
        shape = _check_extents(shape)
        if int(np.prod(shape)) != arr.size:
            raise ShapeError(f"cannot view {arr.size} elements as {shape}")
        arr = arr.reshape(shape)
    elif arr.ndim == 0:
        arr = arr.reshape(1)
    _check_extents(arr.shape)
    return arr


def tensor_index(t: Tensor, coords: Sequence[int]) -> float:
    if len(coords) != t.ndim:
        raise TensorIndexError(f"expected {t.ndim} coordinates, got {len(coords)}")
    offset = 0
    stride = 1
    for axis in range(t.ndim - 1, -1, -1):
        c = int(coords[axis])
        if not 0 <= c < t.shape[axis]:
            raise TensorIndexError(f"coordinate {c} out of range for axis {axis} of extent {t.shape[axis]}")
        offset += c * stride
        stride *= t.shape[axis]
    return float(t.reshape(-1)[offset])


def elementwise(a: Tensor, b: Tensor, op: Literal["add", "sub", "mul"]) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise ValueError(f"unknown elementwise op {op!r}")


def reduce_sum(t: Tensor) -> float:
    return float(np.sum(t))
