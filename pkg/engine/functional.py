# -*- coding:utf-8 -*-
"""Differentiable versions of the elementary tensor algebra."""

from utils.errors import ShapeError
from engine import tensor as T
import numpy as np


def add(a, b):
    value = T.add(a.value, b.value)
    return a.graph.record('add', (a, b), value, lambda g: (g, g))


def scale(a, factor):
    return a.graph.record('scale', (a,), T.scale(a.value, factor), lambda g: (g * factor,))


def hadamard(a, b):
    value = T.hadamard(a.value, b.value)
    return a.graph.record('hadamard', (a, b), value, lambda g: (g * b.value, g * a.value))


def matmul(a, b):
    value = T.matmul(a.value, b.value)
    return a.graph.record('matmul', (a, b), value, lambda g: (g @ b.value.T, a.value.T @ g))


def relu(a):
    mask = a.value > 0
    # subgradient 0 at the kink
    return a.graph.record('relu', (a,), np.where(mask, a.value, 0), lambda g: (g * mask,))


def reshape(a, shape):
    value = a.value.reshape(shape)
    return a.graph.record('reshape', (a,), value, lambda g: (g.reshape(a.shape),))


def flatten(a):
    """Keep the leading batch axis, flatten the rest."""
    return reshape(a, (a.shape[0], -1))


def total(a):
    return a.graph.record('sum', (a,), np.asarray(a.value.sum()), lambda g: (np.full(a.shape, g, dtype=a.value.dtype),))


def sum_squares(a):
    return total(hadamard(a, a))


def mean_rows(a):
    """Average over the second-to-last axis: (..., N, D) -> (..., D)."""
    n = a.shape[-2]
    value = a.value.mean(axis=-2)

    def rule(g):
        return (np.repeat(g[..., None, :], n, axis=-2) / n,)

    return a.graph.record('mean_rows', (a,), value, rule)


def concat(nodes):
    """Concatenate along the last axis, in list order."""
    if not nodes:
        raise ShapeError('concat of an empty list')

    widths = [node.shape[-1] for node in nodes]
    value = np.concatenate([node.value for node in nodes], axis=-1)
    offsets = np.cumsum([0] + widths)

    def rule(g):
        return tuple(g[..., offsets[i]:offsets[i + 1]] for i in range(len(nodes)))

    return nodes[0].graph.record('concat', tuple(nodes), value, rule)
