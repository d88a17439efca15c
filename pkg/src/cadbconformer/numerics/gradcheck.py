"""Central-difference gradient oracle."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor

DEFAULT_EPS = {np.dtype(np.float64): 1e-5, np.dtype(np.float32): 1e-3}


def finite_difference_gradients(f: Callable[[Tensor], object], x: Tensor, eps: float | None = None,
                                indices=None) -> np.ndarray:
    """Estimate d f / d x by central differences, one coordinate at a time.

    ``x.data`` is perturbed in place and restored afterwards. When
    ``indices`` (flat positions) is given only those coordinates are
    estimated; the rest of the returned array is left at zero.
    """
    if eps is None:
        eps = DEFAULT_EPS.get(x.dtype, 1e-5)
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    flat = x.data.reshape(-1)
    if not np.shares_memory(flat, x.data):
        raise ValueError("finite_difference_gradients needs a contiguous tensor")
    grad = np.zeros(x.size, dtype=np.float64)
    positions = range(x.size) if indices is None else indices
    for i in positions:
        orig = flat[i]
        flat[i] = orig + eps
        fp = _scalar(f(x))
        flat[i] = orig - eps
        fm = _scalar(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value while perturbing coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad.reshape(x.shape)


def _scalar(v) -> float:
    if isinstance(v, Tensor):
        v = v.data
    arr = np.asarray(v)
    if arr.size != 1:
        raise ValueError(f"function must return a scalar, got shape {arr.shape}")
    return float(arr.reshape(()))


def relative_error(a, b, floor: float = 1e-8) -> np.ndarray:
    """Elementwise |a - b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def max_relative_error(a, b, floor: float = 1e-8) -> float:
    err = relative_error(a, b, floor)
    return float(err.max()) if err.size else 0.0
