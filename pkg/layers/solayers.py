# -*- coding:utf-8 -*-
"""
Second-order layers.

    Cov         sigma = 1/N sum (x_k - mu)(x_k - mu)^T over the N sites
    augment     C = [[sigma + beta^2 mu mu^T, beta mu], [beta mu^T, 1]]
    robust      sigma_hat = U f(S) U^T, f the eigenvalue rectifier
    O2T         Y = W M W^T with W stored dout x din
    PV          v_j = W[:, j]^T Y W[:, j]
    transition  h(x_k) = W x_k + b at every site (a linear 1x1 convolution)

Matrices carry an optional leading batch axis; parameters are shared across it.
"""

from utils.errors import ShapeError, ConfigError
from engine.linalg import sym_eig, sym_eig_backward, EigPair
from engine.autodiff import STIEFEL
from optim.init import glorot_init, orthonormal_rows
from engine.tensor import sym
from engine import functional as F
from engine import tensor as T
from collections import namedtuple
from .base import Layer
import numpy as np

DEFAULT_BETA = 0.3
DEFAULT_ALPHA = 0.75

CovOutput = namedtuple('CovOutput', ['C', 'mu', 'sigma'])
Transfer = namedtuple('Transfer', ['f', 'derivative'])


def _swap(a):
    return np.swapaxes(a, -1, -2)


def _sum_batch(a, shape):
    return a.reshape((-1,) + shape).sum(axis=0)


def cov_forward(x):
    """Biased (1/N) covariance and mean of the N x D rows of x."""
    if x.ndim < 2:
        raise ShapeError('cov_forward expects an N x D matrix, got shape {}'.format(x.shape))
    if x.shape[-2] == 0:
        raise ShapeError('cov_forward: empty input (N = 0)')

    n = x.shape[-2]
    mu = x.mean(axis=-2)
    centered = x - mu[..., None, :]
    return sym(_swap(centered) @ centered / n), mu


def cov_augment(sigma, mu, beta=DEFAULT_BETA):
    d = mu.shape[-1]
    if sigma.shape[-2:] != (d, d) or sigma.shape[:-2] != mu.shape[:-1]:
        raise ShapeError('cov_augment: sigma {} does not match mu {}'.format(sigma.shape, mu.shape))

    c = np.zeros(mu.shape[:-1] + (d + 1, d + 1), dtype=sigma.dtype)
    c[..., :d, :d] = sigma + beta ** 2 * mu[..., :, None] * mu[..., None, :]
    c[..., :d, d] = beta * mu
    c[..., d, :d] = beta * mu
    c[..., d, d] = 1.0
    return c


def cov_layer_forward(x, augment=True, beta=DEFAULT_BETA):
    sigma, mu = cov_forward(x)
    return CovOutput(C=cov_augment(sigma, mu, beta) if augment else sigma, mu=mu, sigma=sigma)


def _check_o2t(m, w):
    if m.shape[-1] != m.shape[-2] or m.shape[-1] != w.shape[1]:
        raise ShapeError('o2t: descriptor {} does not match W {}'.format(m.shape, w.shape))


def o2t_forward(m, w):
    _check_o2t(m, w)
    return sym(w @ m @ w.T)


def _check_pv(y, w):
    if y.shape[-1] != y.shape[-2] or y.shape[-1] != w.shape[0]:
        raise ShapeError('pv: descriptor {} does not match W {}'.format(y.shape, w.shape))


def pv_forward(y, w):
    """Column sums of W o (Y W)."""
    _check_pv(y, w)
    return (w * (y @ w)).sum(axis=-2)


def pv_forward_quadratic(y, w):
    """The per-column quadratic-form reading of PV, for single matrices."""
    _check_pv(y, w)
    return np.array([w[:, j] @ y @ w[:, j] for j in range(w.shape[1])], dtype=y.dtype)


def robust_transfer(alpha=DEFAULT_ALPHA):
    """f(x) = sqrt(((1-2a)/(2a))^2 + x/a) - (1-a)/(2a), eigenvalues clamped at 0 first."""
    if not 0 < alpha <= 1:
        raise ConfigError('robust alpha must lie in (0, 1], got {}'.format(alpha))

    offset = ((1 - 2 * alpha) / (2 * alpha)) ** 2
    shift = (1 - alpha) / (2 * alpha)

    def f(s):
        return np.sqrt(offset + np.maximum(s, 0) / alpha) - shift

    def derivative(s):
        return np.where(s >= 0, 1.0 / (2 * alpha * np.sqrt(offset + np.maximum(s, 0) / alpha)), 0.0)

    return Transfer(f, derivative)


IDENTITY_TRANSFER = Transfer(lambda s: s, lambda s: np.ones_like(s))


def _rectify_one(sigma, transfer):
    pair = sym_eig(sigma)
    rectified = transfer.f(pair.S)
    return pair, rectified, sym((pair.U * rectified) @ pair.U.T)


def robust_rectify(sigma, alpha=DEFAULT_ALPHA, transfer=None):
    transfer = transfer or robust_transfer(alpha)
    if sigma.ndim == 2:
        return _rectify_one(sigma, transfer)[2]

    flat = sigma.reshape((-1,) + sigma.shape[-2:])
    return np.stack([_rectify_one(m, transfer)[2] for m in flat]).reshape(sigma.shape)


def transition_forward(x, w, b):
    if x.shape[-1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ShapeError('transition: input width {} does not match W {} / b {}'.format(x.shape[-1], w.shape, b.shape))
    return x @ w.T + b


def covariance(x):
    """Differentiable Cov layer; returns the (sigma, mu) nodes."""
    sigma, mu = cov_forward(x.value)
    n = x.shape[-2]
    centered = x.value - mu[..., None, :]

    def sigma_rule(g):
        return (2.0 / n * centered @ sym(g),)

    def mu_rule(g):
        return (np.broadcast_to(g[..., None, :] / n, x.shape).copy(),)

    return (x.graph.record('cov', (x,), sigma, sigma_rule),
            x.graph.record('cov_mean', (x,), mu, mu_rule))


def augment(sigma, mu, beta=DEFAULT_BETA):
    value = cov_augment(sigma.value, mu.value, beta)
    d = mu.shape[-1]

    def rule(g):
        block = g[..., :d, :d]
        d_mu = beta ** 2 * ((block + _swap(block)) @ mu.value[..., None])[..., 0] + beta * (g[..., :d, d] + g[..., d, :d])
        return block.copy(), d_mu

    return sigma.graph.record('cov_augment', (sigma, mu), value, rule)


def o2t(m, w):
    value = o2t_forward(m.value, w.value)

    def rule(g):
        g = sym(g)
        d_m = w.value.T @ g @ w.value
        d_w = g @ w.value @ (m.value + _swap(m.value))
        return d_m, _sum_batch(d_w, w.shape)

    return m.graph.record('o2t', (m, w), value, rule)


def pv(y, w):
    value = pv_forward(y.value, w.value)

    def rule(g):
        weighted = w.value * g[..., None, :]
        d_y = weighted @ w.value.T
        d_w = (y.value + _swap(y.value)) @ w.value * g[..., None, :]
        return d_y, _sum_batch(d_w, w.shape)

    return y.graph.record('pv', (y, w), value, rule)


def rectify(sigma, alpha=DEFAULT_ALPHA, transfer=None):
    """Differentiable robust estimate; backward flows through sym_eig_backward."""
    transfer = transfer or robust_transfer(alpha)
    flat = sigma.value.reshape((-1,) + sigma.shape[-2:])
    parts = [_rectify_one(m, transfer) for m in flat]
    value = np.stack([part[2] for part in parts]).reshape(sigma.shape)

    def rule(g):
        grads = []
        for m, (pair, rectified, _), upstream in zip(flat, parts, g.reshape(flat.shape)):
            d_u = (upstream + upstream.T) @ pair.U * rectified
            d_s = transfer.derivative(pair.S) * np.einsum('ij,ik,kj->j', pair.U, upstream, pair.U)
            grads.append(sym_eig_backward(m, EigPair(pair.U, pair.S), d_u, d_s))
        return (np.stack(grads).reshape(sigma.shape),)

    return sigma.graph.record('robust', (sigma,), value, rule)


def transition(x, w, b):
    value = transition_forward(x.value, w.value, b.value)

    def rule(g):
        rows = g.reshape(-1, w.shape[0])
        return g @ w.value, rows.T @ x.value.reshape(-1, w.shape[1]), rows.sum(axis=0)

    return x.graph.record('transition', (x, w, b), value, rule)


class Sites(Layer):
    """B x H x W x D activation maps to B x N x D fiber matrices."""
    kind = 'sites'

    def forward(self, graph, x):
        b, h, w, d = x.shape
        return F.reshape(x, (b, h * w, d))


class Cov(Layer):
    kind = 'cov'

    def __init__(self, name, augment=True, beta=DEFAULT_BETA, robust=False, alpha=DEFAULT_ALPHA, group='head'):
        super().__init__(name, group)
        self.augment = augment
        self.beta = beta
        self.robust = robust
        self.alpha = alpha

    def forward(self, graph, x):
        sigma, mu = covariance(x)
        if self.robust:
            sigma = rectify(sigma, self.alpha)
        if self.augment:
            return augment(sigma, mu, self.beta)
        return sigma

    def describe(self):
        return 'cov{}{}'.format('+mean' if self.augment else '', '+robust' if self.robust else '')


class O2T(Layer):
    kind = 'o2t'

    def __init__(self, name, din, dout, rng, orthonormal=False, group='head'):
        super().__init__(name, group)
        w = glorot_init((dout, din), din, dout, rng)
        if orthonormal:
            if dout > din:
                raise ConfigError('{}: orthonormal O2T needs dout <= din, got {} > {}'.format(name, dout, din))
            w = orthonormal_rows(w)
        self.weights = self.add_param('weights', w, manifold=STIEFEL if orthonormal else 'euclidean')

    def forward(self, graph, x):
        return o2t(x, graph.param(self.weights))

    def describe(self):
        dout, din = self.weights.shape
        return 'o2t({}->{})'.format(din, dout)


class PV(Layer):
    kind = 'pv'

    def __init__(self, name, din, dout, rng, group='head'):
        super().__init__(name, group)
        self.weights = self.add_param('weights', glorot_init((din, dout), din, dout, rng))

    def forward(self, graph, x):
        return pv(x, graph.param(self.weights))

    def describe(self):
        return 'pv({}->{})'.format(*self.weights.shape)


class Transition(Layer):
    kind = 'transition'

    def __init__(self, name, din, dout, rng, group='head'):
        super().__init__(name, group)
        self.weights = self.add_param('weights', glorot_init((dout, din), din, dout, rng))
        self.bias = self.add_param('bias', T.zeros(dout))

    def forward(self, graph, x):
        return transition(x, graph.param(self.weights), graph.param(self.bias))

    def describe(self):
        dout, din = self.weights.shape
        return 'transition({}->{})'.format(din, dout)
