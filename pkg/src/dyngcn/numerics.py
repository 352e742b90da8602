"""Dense float64 matrix helpers, activations and the finite-difference oracle.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64; a matrix
sequence is a 3-D array whose leading axis indexes the step.  The helpers
here validate shapes and raise :class:`ShapeError` with both offending shapes.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=DTYPE)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    return a


def as_sequence(ms) -> np.ndarray:
    """Stack a list of equally shaped matrices into a (T, rows, cols) array."""
    if isinstance(ms, np.ndarray):
        a = ms.astype(DTYPE, copy=False)
    else:
        mats = [as_matrix(m) for m in ms]
        if not mats:
            raise ShapeError("a matrix sequence needs at least one step")
        shape = mats[0].shape
        for i, m in enumerate(mats):
            if m.shape != shape:
                raise ShapeError(f"step {i} has shape {m.shape}, step 0 has {shape}")
        a = np.stack(mats)
    if a.ndim != 3 or a.shape[0] < 1:
        raise ShapeError(f"expected a (T, rows, cols) sequence, got shape {a.shape}")
    return a


# -- activations -------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # branch on sign so exp never overflows
    x = np.asarray(x, dtype=DTYPE)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=DTYPE))


_ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh}


def activate(m, kind: str) -> np.ndarray:
    """Apply ``relu``, ``sigmoid`` or ``tanh`` elementwise."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}") from None
    return fn(np.asarray(m, dtype=DTYPE))


def softmax_rows(m) -> np.ndarray:
    """Softmax along the last axis with max subtraction."""
    m = np.asarray(m, dtype=DTYPE)
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


# -- linear algebra with shape diagnostics -----------------------------------

def matmul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _same_shape(name: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} differ")


def hadamard(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    _same_shape("hadamard", a, b)
    return a * b


def add(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    _same_shape("add", a, b)
    return a + b


def transpose(a) -> np.ndarray:
    return as_matrix(a).T.copy()


def concat_cols(a, b) -> np.ndarray:
    """Concatenate along the last axis; leading axes must agree."""
    a, b = np.asarray(a, dtype=DTYPE), np.asarray(b, dtype=DTYPE)
    if a.ndim != b.ndim or a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(f"concat_cols: row shapes {a.shape} and {b.shape} differ")
    return np.concatenate([a, b], axis=-1)


# -- gradient oracle ---------------------------------------------------------

def finite_diff_grad(f: Callable[[np.ndarray], float], p, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function at ``p``.

    ``p`` may have any shape; the returned gradient has the same shape.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    p = np.array(p, dtype=DTYPE)
    flat = p.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(p))
        flat[i] = orig - h
        fm = float(f(p))
        flat[i] = orig
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(p.shape)


def grad_rel_error(analytic, numeric) -> np.ndarray:
    """Per-coordinate |a - g| / max(1, |a|, |g|)."""
    a = np.asarray(analytic, dtype=DTYPE)
    g = np.asarray(numeric, dtype=DTYPE)
    return np.abs(a - g) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(g)))
