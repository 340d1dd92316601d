# -*- coding:utf-8 -*-
"""
Dense tensors are plain numpy arrays in row-major (C) order.

The helpers below are the elementary algebra used by the layers. None of them
broadcast: operands must have identical shapes, otherwise a ShapeError is
raised.
"""

from utils.errors import ShapeError
import numpy as np

_default_dtype = np.float64


def set_default_dtype(name):
    global _default_dtype
    dtype = np.dtype(name)
    if dtype not in (np.float32, np.float64):
        raise ValueError('Unsupported scalar kind {}'.format(name))

    _default_dtype = dtype.type


def default_dtype():
    return _default_dtype


def tensor(data, dtype=None) -> np.ndarray:
    return np.ascontiguousarray(data, dtype=dtype or _default_dtype)


def zeros(shape, dtype=None) -> np.ndarray:
    return np.zeros(shape, dtype=dtype or _default_dtype)


def element_count(shape):
    return int(np.prod(shape, dtype=np.int64))


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeError('{}: shape mismatch {} vs {}'.format(op, a.shape, b.shape))


def reshape_activations(act: np.ndarray) -> np.ndarray:
    """W x H x D activations to the N x D matrix of per-site fibers (N = W*H)."""
    if act.ndim != 3:
        raise ShapeError('Expected a W x H x D activation map, got shape {}'.format(act.shape))

    w, h, d = act.shape
    return act.reshape(w * h, d)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError('matmul expects matrices, got {} and {}'.format(a.shape, b.shape))
    if a.shape[1] != b.shape[0]:
        raise ShapeError('matmul: inner dims disagree {} vs {}'.format(a.shape, b.shape))

    return a @ b


def transpose(a: np.ndarray) -> np.ndarray:
    if a.ndim != 2:
        raise ShapeError('transpose expects a matrix, got {}'.format(a.shape))

    return np.ascontiguousarray(a.T)


def add(a, b):
    _same_shape(a, b, 'add')
    return a + b


def scale(a, factor):
    return a * factor


def hadamard(a, b):
    _same_shape(a, b, 'hadamard')
    return a * b


def elementwise_map(f, a):
    return np.vectorize(f, otypes=[a.dtype])(a) if a.size else a.copy()


def relu(x):
    return np.maximum(x, 0)


def sym(a):
    """(A + A^T) / 2 over the last two axes."""
    return (a + np.swapaxes(a, -1, -2)) / 2
