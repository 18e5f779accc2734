"""p-norm distances and seeded random streams."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import DataError, DimensionError

DEFAULT_P = 2.0


def as_vector(values, name: str = "vector") -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError(f"{name} must be a non-empty 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DataError(f"{name} contains non-finite values")
    return v


def as_matrix(rows, name: str = "matrix") -> np.ndarray:
    m = np.asarray(rows, dtype=np.float64)
    if m.ndim == 1 and m.size == 0:
        m = m.reshape(0, 0)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-d, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError(f"{name} contains non-finite values")
    return m


def check_p(p: float) -> float:
    p = float(p)
    if not p >= 1.0 or math.isinf(p):
        raise ValueError(f"p-norm requires finite p >= 1 (got {p}); smaller p is not a metric")
    return p


def _reduce(diff: np.ndarray, p: float) -> np.ndarray:
    """p-norm over the last axis of a difference array.

    cumsum is a strictly sequential scan, so every entry is summed in ascending
    coordinate order whatever the leading shape; scalar and matrix callers agree bit for bit.
    """
    t = np.abs(diff)
    if p == 2.0:
        t = t * t
    elif p != 1.0:
        t = t ** p
    acc = np.cumsum(t, axis=-1)[..., -1]
    if p == 1.0:
        return acc
    if p == 2.0:
        return np.sqrt(acc)
    return acc ** (1.0 / p)


def pnorm_distance(x: Sequence[float], y: Sequence[float], p: float = DEFAULT_P) -> float:
    """(sum_i |x_i - y_i|^p)^(1/p), accumulated in ascending coordinate order."""
    p = check_p(p)
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.size} vs {y.size}")
    return float(_reduce((x - y)[None, :], p)[0])


def pairwise_distances(queries, refs, p: float = DEFAULT_P) -> np.ndarray:
    """Matrix D with D[i, j] == pnorm_distance(queries[i], refs[j], p)."""
    p = check_p(p)
    q = as_matrix(queries, "queries")
    r = as_matrix(refs, "refs")
    if r.shape[0] == 0:
        raise DataError("pairwise_distances needs at least one reference vector")
    if q.shape[0] == 0:
        return np.zeros((0, r.shape[0]))
    if q.shape[1] != r.shape[1]:
        raise DimensionError(f"dimension mismatch: queries {q.shape[1]} vs refs {r.shape[1]}")
    return _reduce(q[:, None, :] - r[None, :, :], p)


def rowwise_distances(X, Y, p: float = DEFAULT_P) -> np.ndarray:
    """d[i] == pnorm_distance(X[i], Y[i], p)."""
    p = check_p(p)
    X, Y = np.asarray(X, dtype=np.float64), np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 2:
        raise DimensionError(f"row-wise distances need equal 2-d shapes, got {X.shape} and {Y.shape}")
    return _reduce(X - Y, p)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for (seed, stream...) so stages never share state."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.default_rng([int(seed), *map(int, stream)])
