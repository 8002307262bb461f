"""Dense float64 tensor kernels.

Tensors are plain ``numpy.ndarray`` values in row-major order with 64-bit
floats; every kernel here is a pure function returning a fresh array.  These
are the raw (non-differentiated) building blocks: the autodiff layer wraps
them with backward rules.

All axis arguments are 0-based, numpy style.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidAxisError, ShapeError


def as_tensor(data) -> np.ndarray:
    """Coerce ``data`` to a C-ordered float64 array (no copy if already one).

    Scalars become 0-d arrays, the representation used for loss values.
    """
    return np.asarray(data, dtype=np.float64, order="C")


def _check_axis(x: np.ndarray, axis: int, name: str) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise InvalidAxisError(
            f"{name}={axis} out of range for tensor with {x.ndim} axes"
        )
    return axis % x.ndim


def swap_axes(x: np.ndarray, a: int, b: int) -> np.ndarray:
    """Exchange axes ``a`` and ``b``, materializing a copy.

    Involution: ``swap_axes(swap_axes(x, a, b), a, b) == x`` exactly.
    """
    a = _check_axis(x, a, "a")
    b = _check_axis(x, b, "b")
    if a == b:
        return x.copy()
    return np.ascontiguousarray(np.swapaxes(x, a, b))


def mode1_matmul(p: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Contract a square matrix against the first axis of ``x``.

    ``result[i, ...] = sum_j p[i, j] * x[j, ...]``; the shape of ``x`` is
    preserved because ``p`` must be square.
    """
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ShapeError(f"p must be square, got shape {p.shape}")
    if x.ndim < 1 or x.shape[0] != p.shape[1]:
        raise ShapeError(
            f"first axis of x ({x.shape}) does not match p side {p.shape[1]}"
        )
    n = p.shape[0]
    out = p @ x.reshape(n, -1)
    return np.ascontiguousarray(out.reshape(x.shape))


def _binary_check(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape == b.shape:
        return
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"shapes {a.shape} and {b.shape} are incompatible") from None


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _binary_check(a, b)
    return a + b


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _binary_check(a, b)
    return a * b


def scale(x: np.ndarray, c: float) -> np.ndarray:
    return x * float(c)


def exp(x: np.ndarray) -> np.ndarray:
    return np.exp(x)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sum_axis(x: np.ndarray, axis: int | None = None, keepdims: bool = False):
    """Sum over one axis, or over all elements when ``axis`` is None."""
    if axis is None:
        return np.asarray(x.sum())
    axis = _check_axis(x, axis, "axis")
    return x.sum(axis=axis, keepdims=keepdims)


def max_axis(x: np.ndarray, axis: int, keepdims: bool = False) -> np.ndarray:
    axis = _check_axis(x, axis, "axis")
    return x.max(axis=axis, keepdims=keepdims)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the last axis, stabilized by max subtraction.

    Stable for arbitrarily large logits (e.g. logits divided by a tiny
    temperature); rows sum to 1 up to float64 rounding.
    """
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
