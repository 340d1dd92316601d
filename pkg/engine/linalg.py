# -*- coding:utf-8 -*-
"""
Symmetric eigendecomposition by cyclic Jacobi rotations, its matrix
backpropagation rule, and a thin QR with a positive-diagonal R.
"""

from utils.errors import ConvergenceError, NumericError, RankError, ShapeError
from engine.tensor import sym
from collections import namedtuple
import numpy as np
import logging, math

MAX_SWEEPS = 100
OFF_DIAGONAL_TOLERANCE = 1e-12
EIGENGAP_FLOOR = 1e-6
RANK_TOLERANCE = 1e-12

EigPair = namedtuple('EigPair', ['U', 'S'])


def _check_square(a, op):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError('{} expects a square matrix, got shape {}'.format(op, a.shape))


def _rotate(a, v, p, q):
    apq = a[p, q]
    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
    if abs(theta) > 1e150:
        t = 1.0 / (2.0 * theta)
    else:
        t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
        if theta < 0:
            t = -t

    c = 1.0 / math.sqrt(t * t + 1.0)
    s = t * c

    col_p = a[:, p].copy()
    col_q = a[:, q].copy()
    a[:, p] = c * col_p - s * col_q
    a[:, q] = s * col_p + c * col_q

    row_p = a[p, :].copy()
    row_q = a[q, :].copy()
    a[p, :] = c * row_p - s * row_q
    a[q, :] = s * row_p + c * row_q
    a[p, q] = a[q, p] = 0.0

    vec_p = v[:, p].copy()
    vec_q = v[:, q].copy()
    v[:, p] = c * vec_p - s * vec_q
    v[:, q] = s * vec_p + c * vec_q


def _off_norm(a):
    # summed directly: total minus diagonal mass cancels to rounding noise near convergence
    return math.sqrt(2.0 * float(np.sum(np.triu(a, 1) ** 2)))


def sym_eig(a: np.ndarray) -> EigPair:
    """
    Eigenvalues in descending order and eigenvectors in columns. Each
    eigenvector is signed so its largest-magnitude entry is positive (lowest
    row index on ties).
    """
    _check_square(a, 'sym_eig')
    if not np.all(np.isfinite(a)):
        raise NumericError('sym_eig: input has non-finite entries')

    work = sym(np.array(a, dtype=np.float64))
    n = work.shape[0]
    v = np.eye(n)
    threshold = OFF_DIAGONAL_TOLERANCE * np.linalg.norm(work)

    sweeps = 0
    while _off_norm(work) > threshold:
        if sweeps == MAX_SWEEPS:
            raise ConvergenceError('sym_eig: no convergence after {} sweeps'.format(MAX_SWEEPS))

        for p in range(n - 1):
            for q in range(p + 1, n):
                if work[p, q] != 0.0:
                    _rotate(work, v, p, q)
        sweeps += 1

    logging.getLogger('socnn').debug('sym_eig: {}x{} converged in {} sweeps'.format(n, n, sweeps))

    values = np.diag(work).copy()
    order = np.argsort(-values, kind='stable')
    values = values[order]
    v = v[:, order]

    if n:
        pivots = np.argmax(np.abs(v), axis=0)
        signs = np.where(v[pivots, np.arange(n)] < 0, -1.0, 1.0)
        v = v * signs

    dtype = a.dtype if np.issubdtype(a.dtype, np.floating) else np.float64
    return EigPair(U=v.astype(dtype, copy=False), S=values.astype(dtype, copy=False))


def eigengap_kernel(s):
    """K[i, j] = 1 / (s_j - s_i) off the diagonal, 0 on it, with tiny gaps clamped to +-EIGENGAP_FLOOR."""
    diff = s[None, :] - s[:, None]
    clamped = np.where(np.abs(diff) < EIGENGAP_FLOOR, np.where(diff < 0, -EIGENGAP_FLOOR, EIGENGAP_FLOOR), diff)
    kernel = 1.0 / clamped
    np.fill_diagonal(kernel, 0.0)
    return kernel


def sym_eig_backward(a, pair: EigPair, d_u, d_s):
    """
    Gradient with respect to A of a loss depending on (U, S) = sym_eig(A):
    dA = sym(U (K o (U^T dU) + diag(dS)) U^T), K from eigengap_kernel.
    """
    u, s = pair
    if d_u is None:
        d_u = np.zeros_like(u)
    if d_s is None:
        d_s = np.zeros_like(s)
    if d_u.shape != u.shape or d_s.shape != s.shape:
        raise ShapeError('sym_eig_backward: gradient shapes {} / {} do not match U {} / S {}'.format(
            d_u.shape, d_s.shape, u.shape, s.shape))

    inner = eigengap_kernel(s) * (u.T @ d_u) + np.diag(d_s)
    return sym(u @ inner @ u.T)


def qr_thin(a: np.ndarray):
    """A = QR for a tall D x D' matrix with R's diagonal made positive."""
    if a.ndim != 2 or a.shape[0] < a.shape[1]:
        raise ShapeError('qr_thin expects a tall matrix, got shape {}'.format(a.shape))

    q, r = np.linalg.qr(a, mode='reduced')
    diagonal = np.diag(r)
    if np.any(np.abs(diagonal) < RANK_TOLERANCE):
        raise RankError('qr_thin: matrix is rank deficient (min |R_ii| = {:.3g})'.format(np.min(np.abs(diagonal))))

    signs = np.where(diagonal < 0, -1.0, 1.0)
    return q * signs, r * signs[:, None]
