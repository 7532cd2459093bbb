"""Flat float64 vectors with shape metadata, deterministic RNG, and
finite-difference utilities.

Everything downstream (classifiers, attacks, the harness) works on these
tensors. Data is stored flat; ``shape`` records the logical layout, e.g.
``(1, 28, 28)`` for a grayscale image or ``(8,)`` for a feature vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np


def _as_flat_f64(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    return arr


@dataclass(frozen=True)
class Tensor:
    """Immutable flat vector of 64-bit reals plus a logical shape."""

    data: np.ndarray
    shape: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "data", _as_flat_f64(self.data))
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if any(s <= 0 for s in self.shape):
            raise ValueError(f"shape extents must be positive, got {self.shape}")
        if int(np.prod(self.shape)) != self.data.size:
            raise ValueError(
                f"shape {self.shape} does not match data length {self.data.size}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("tensor contains non-finite entries")
        self.data.setflags(write=False)

    @classmethod
    def of(cls, values, shape: Iterable[int] | None = None) -> "Tensor":
        """Build a tensor from any array-like; shape defaults to the
        array's own shape (flattened 1-D if scalar-like)."""
        arr = np.asarray(values, dtype=np.float64)
        if shape is None:
            shape = arr.shape if arr.ndim > 0 else (1,)
        return cls(arr.reshape(-1), tuple(shape))

    @classmethod
    def zeros(cls, shape: Iterable[int]) -> "Tensor":
        shape = tuple(shape)
        return cls(np.zeros(int(np.prod(shape))), shape)

    @property
    def size(self) -> int:
        return self.data.size

    def reshaped(self) -> np.ndarray:
        """The data viewed in its logical shape (read-only)."""
        return self.data.reshape(self.shape)

    def with_data(self, data) -> "Tensor":
        """Same shape, new values."""
        return Tensor(_as_flat_f64(data), self.shape)

    def __add__(self, other):
        return self.with_data(self.data + _coerce(other))

    def __sub__(self, other):
        return self.with_data(self.data - _coerce(other))

    def __mul__(self, other):
        return self.with_data(self.data * _coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_data(-self.data)

    def __len__(self):
        return self.data.size


def _coerce(other) -> np.ndarray | float:
    if isinstance(other, Tensor):
        return other.data
    return other


class Rng:
    """Deterministic random stream. Identical seed, identical stream,
    regardless of platform (counter-based Philox underneath)."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def normal(self, size=None, loc=0.0, scale=1.0) -> np.ndarray:
        return self._gen.normal(loc=loc, scale=scale, size=size)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size=size)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def choice(self, n, size=None, replace=True):
        return self._gen.choice(n, size=size, replace=replace)

    def permutation(self, n) -> np.ndarray:
        return self._gen.permutation(n)

    def spawn(self) -> "Rng":
        """Independent child stream, still fully determined by the seed."""
        return Rng(int(self.integers(0, 2**63)))


def dot(a: Tensor, b: Tensor) -> float:
    """Dot product of two equal-length tensors."""
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.dot(a.data, b.data))


def argmax_abs_excluding(w: Tensor | np.ndarray, excluded) -> int:
    """Index of the largest |w_j| outside ``excluded``; ties go to the
    lowest index. ``excluded`` is any iterable of indices or a boolean
    mask of the same length as w."""
    wd = w.data if isinstance(w, Tensor) else np.asarray(w, dtype=np.float64)
    mask = np.zeros(wd.size, dtype=bool)
    excluded = np.asarray(list(excluded) if not isinstance(excluded, np.ndarray) else excluded)
    if excluded.size:
        if excluded.dtype == bool:
            mask = excluded.copy()
        else:
            mask[excluded.astype(int)] = True
    if mask.all():
        raise ValueError("all indices excluded")
    vals = np.abs(wd)
    vals[mask] = -np.inf
    # np.argmax already returns the first (lowest) index among ties
    return int(np.argmax(vals))


def finite_diff_grad(fn: Callable[[Tensor], float], x: Tensor, h: float) -> Tensor:
    """Central-difference gradient of a scalar function at x."""
    if h <= 0:
        raise ValueError("step size h must be positive")
    g = np.empty(x.size)
    base = x.data.copy()
    for i in range(x.size):
        hi = base.copy()
        lo = base.copy()
        hi[i] += h
        lo[i] -= h
        fp = fn(x.with_data(hi))
        fm = fn(x.with_data(lo))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError("function returned non-finite value")
        g[i] = (fp - fm) / (2.0 * h)
    return x.with_data(g)
