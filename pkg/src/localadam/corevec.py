"""Dense vector helpers and diagonal preconditioners.

Everything here works on float64 numpy arrays. A "vector" is a 1-D array;
batched helpers accept a leading stack axis where noted.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def as_vector(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Return ``x`` as a finite 1-D float64 array, optionally checking its length."""
    arr = np.array(x, dtype=np.float64, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must have at least one entry")
    if dim is not None and arr.size != dim:
        raise ValueError(f"{name} has dimension {arr.size}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class DiagPrecond:
    """Diagonal positive-definite matrix stored by its diagonal."""

    diag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=np.float64)
        if d.ndim != 1 or d.size == 0:
            raise ValueError("preconditioner diagonal must be a non-empty 1-D array")
        if not np.all(np.isfinite(d)) or np.any(d <= 0.0):
            raise ValueError("preconditioner diagonal must be finite and strictly positive")
        object.__setattr__(self, "diag", d)

    @classmethod
    def from_second_moment(cls, v, lam: float) -> "DiagPrecond":
        """Build ``diag(sqrt(v + lam**2))``; every entry is at least ``lam``."""
        if lam <= 0:
            raise ValueError("lam must be positive")
        v = np.asarray(v, dtype=np.float64)
        if np.any(v < 0):
            raise ValueError("second moment must be nonnegative")
        return cls(np.sqrt(v + lam * lam))

    @classmethod
    def identity(cls, dim: int) -> "DiagPrecond":
        return cls(np.ones(dim))

    @property
    def dim(self) -> int:
        return self.diag.size

    @property
    def min(self) -> float:
        return float(self.diag.min())

    @property
    def max(self) -> float:
        return float(self.diag.max())


def weighted_norm_sq(x, H: DiagPrecond, inverse: bool = False):
    """Squared norm of ``x`` in the metric ``H`` (or ``H^{-1}`` when ``inverse``).

    ``x`` may carry leading batch axes; the reduction is over the last axis.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != H.dim:
        raise ValueError(f"dimension mismatch: x has {x.shape[-1]}, H has {H.dim}")
    sq = x * x
    w = sq / H.diag if inverse else sq * H.diag
    out = w.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def ordered_sum(stack: np.ndarray, axis: int = 0) -> np.ndarray:
    """Sum along ``axis`` strictly in ascending index order.

    Unlike ``np.sum`` this never reassociates, so the result is a fixed
    function of the inputs whatever the memory layout.
    """
    stack = np.moveaxis(np.asarray(stack, dtype=np.float64), axis, 0)
    if stack.shape[0] == 0:
        raise ValueError("cannot sum an empty stack")
    acc = stack[0].copy()
    for i in range(1, stack.shape[0]):
        acc += stack[i]
    return acc


def ordered_mean(stack: np.ndarray, axis: int = 0) -> np.ndarray:
    stack = np.asarray(stack, dtype=np.float64)
    return ordered_sum(stack, axis) / stack.shape[axis]


def worker_mean(vs: Sequence) -> np.ndarray:
    """Coordinate-wise mean of equally sized vectors, summed in list order."""
    if len(vs) == 0:
        raise ValueError("worker_mean of an empty list")
    arrs = [np.asarray(v, dtype=np.float64) for v in vs]
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise ValueError("all vectors must share one shape")
    return ordered_mean(np.stack(arrs), axis=0)
