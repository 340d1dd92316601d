# -*- coding:utf-8 -*-

from utils.errors import ConfigError
from engine.linalg import qr_thin
from engine import tensor as T
import numpy as np


def glorot_bound(fan_in, fan_out):
    if fan_in <= 0 or fan_out <= 0:
        raise ConfigError('Glorot fans must be positive, got ({}, {})'.format(fan_in, fan_out))

    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def glorot_init(shape, fan_in, fan_out, rng, dtype=None) -> np.ndarray:
    bound = glorot_bound(fan_in, fan_out)
    return rng.uniform(-bound, bound, size=shape).astype(dtype or T.default_dtype())


def conv_fans(kh, kw, cin, cout):
    return kh * kw * cin, kh * kw * cout


def orthonormal_rows(w: np.ndarray) -> np.ndarray:
    """Closest-in-QR-sense matrix with orthonormal rows (requires rows <= columns)."""
    if w.shape[0] > w.shape[1]:
        raise ConfigError('Cannot make a {}x{} matrix row-orthonormal'.format(*w.shape))

    q, _ = qr_thin(w.T.astype(np.float64))
    return np.ascontiguousarray(q.T).astype(w.dtype)
