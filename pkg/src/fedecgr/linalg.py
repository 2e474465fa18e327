"""Flat-vector primitives and splittable random streams.

Parameter vectors and gradients are plain 1-D ``float64`` numpy arrays.
Reductions go through :func:`math.fsum`, which is correctly rounded and
therefore independent of summation order, BLAS build and thread count.

Random streams
--------------
:class:`RngStream` wraps numpy's ``PCG64`` bit generator seeded through
``SeedSequence(entropy=seed, spawn_key=stream_id)``. The pair
``(seed, stream_id)`` fully determines the sequence, and ``stream_id`` is a
tuple of non-negative integers built from purpose tags below plus client
and round indices. These constants are part of the replay contract: changing
them changes every exported run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

# Purpose tags, first element of every stream_id.
STREAM_PARTITION = 1
STREAM_INIT = 2
STREAM_BATCHES = 3
STREAM_DATA_CENTERS = 4
STREAM_DATA_NOISE = 5
STREAM_THEORY = 6


def as_vector(values) -> np.ndarray:
    """Copy ``values`` into a fresh 1-D float64 array."""
    x = np.array(values, dtype=np.float64).reshape(-1)
    return x


def _check_same_length(x, y):
    if x.shape != y.shape:
        raise DimensionError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")


def dot(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_same_length(x, y)
    return math.fsum(np.multiply(x, y))


def norm(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    # Scale first so squaring cannot overflow or underflow.
    m = float(np.max(np.abs(x))) if x.size else 0.0
    if m == 0.0 or not math.isfinite(m):
        return m
    xs = x / m
    return m * math.sqrt(math.fsum(xs * xs))


def axpy(alpha: float, x, y) -> np.ndarray:
    """Return ``alpha * x + y`` as a new array."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_same_length(x, y)
    return alpha * x + y


def scale(k: float, x) -> np.ndarray:
    return k * np.asarray(x, dtype=np.float64)


def ordered_sum(vectors, length=None) -> np.ndarray:
    """Sum vectors one at a time in the given order.

    ``length`` is required when ``vectors`` may be empty.
    """
    total = None
    for v in vectors:
        v = np.asarray(v, dtype=np.float64)
        if total is None:
            total = v.copy()
        else:
            _check_same_length(total, v)
            total += v
    if total is None:
        if length is None:
            raise ValueError("length is required for an empty sum")
        total = np.zeros(length)
    return total


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "stream_id", tuple(int(k) for k in self.stream_id))
        if any(k < 0 for k in self.stream_id) or self.seed < 0:
            raise ValueError("seed and stream_id entries must be non-negative")

    def child(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + tuple(keys))

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream_id)
        return np.random.Generator(np.random.PCG64(ss))
