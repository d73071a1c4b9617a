"""Embedding validation and distance functions.

Embeddings are 1-D numpy arrays. Storage is float32, while every distance is
accumulated in float64 in ascending coordinate order.
"""

import numpy as np

from ._kernels import squared_l2_pair
from .exceptions import InvalidArgumentError


def as_embedding(values, dtype=None):
    """Validate ``values`` as one embedding and return it as a 1-D array.

    With ``dtype=None`` floating input keeps its precision and anything else
    becomes float64; pass ``np.float32`` to get storage precision.
    """
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"embedding must be 1-D, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise InvalidArgumentError("embedding dimension must be positive")
    if dtype is None:
        dtype = arr.dtype if np.issubdtype(arr.dtype, np.floating) else np.float64
    try:
        arr = arr.astype(dtype, copy=False)
    except (TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"embedding values must be real numbers: {exc}") from None
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("embedding contains non-finite values")
    return arr


def _pair(a, b):
    a = as_embedding(a)
    b = as_embedding(b)
    if a.shape[0] != b.shape[0]:
        raise InvalidArgumentError(f"dimension mismatch: {a.shape[0]} != {b.shape[0]}")
    return a, b


def squared_l2(a, b) -> float:
    """Squared Euclidean distance, accumulated in double precision."""
    a, b = _pair(a, b)
    return float(squared_l2_pair(a, b))


def l2(a, b) -> float:
    return float(np.sqrt(squared_l2(a, b)))


def normalize(a):
    """Scale ``a`` to unit L2 norm. Zero vectors are rejected."""
    a = as_embedding(a)
    norm = np.sqrt(squared_l2_pair(a, np.zeros_like(a)))
    if norm == 0.0:
        raise InvalidArgumentError("cannot normalize a zero vector")
    return (a.astype(np.float64) / norm).astype(a.dtype)
