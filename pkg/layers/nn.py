# -*- coding:utf-8 -*-
"""
First-order building blocks: convolution, 2x2 max pooling, fully-connected,
ReLU and softmax cross-entropy.

Activations are batch-leading, channels-last (B x H x W x C). Kernels also
accept a single H x W x C map.
"""

from numpy.lib.stride_tricks import sliding_window_view
from utils.errors import ShapeError, LabelError, ConfigError
from optim.init import glorot_init, conv_fans
from engine import functional as F
from engine import tensor as T
from .base import Layer
import numpy as np
import math

SAME = 'same'
VALID = 'valid'


def _batched(x, ndim):
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim != ndim:
        raise ShapeError('Expected {} or {} dims, got shape {}'.format(ndim - 1, ndim, x.shape))
    return x, False


def _padding(size, kernel, stride, padding):
    if padding == VALID:
        return 0, 0
    if padding != SAME:
        raise ConfigError('Unknown padding {!r}'.format(padding))

    out = math.ceil(size / stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def _conv_windows(x, weights, stride, padding):
    kh, kw, cin, _ = weights.shape
    if x.shape[-1] != cin:
        raise ShapeError('conv2d: input has {} channels, kernel expects {}'.format(x.shape[-1], cin))

    pads = (_padding(x.shape[1], kh, stride, padding), _padding(x.shape[2], kw, stride, padding))
    xp = np.pad(x, ((0, 0), pads[0], pads[1], (0, 0)))
    if xp.shape[1] < kh or xp.shape[2] < kw:
        raise ShapeError('conv2d: input {} smaller than kernel {}x{}'.format(x.shape, kh, kw))

    windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    return windows, pads, xp.shape


def conv2d_forward(x, weights, bias, stride=1, padding=SAME):
    """Cross-correlation (no kernel flip) of x with kH x kW x Cin x Cout weights."""
    x, single = _batched(x, 4)
    windows, _, _ = _conv_windows(x, weights, stride, padding)
    out = np.tensordot(windows, weights, axes=([3, 4, 5], [2, 0, 1])) + bias
    return out[0] if single else out


def conv2d(x, weights, bias, stride=1, padding=SAME):
    windows, pads, padded_shape = _conv_windows(x.value, weights.value, stride, padding)
    value = np.tensordot(windows, weights.value, axes=([3, 4, 5], [2, 0, 1])) + bias.value
    kh, kw = weights.shape[:2]
    ho, wo = value.shape[1:3]

    def rule(g):
        d_w = np.tensordot(windows, g, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
        d_b = g.sum(axis=(0, 1, 2))

        d_xp = np.zeros(padded_shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                d_xp[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride, :] += g @ weights.value[i, j].T

        (top, bottom), (left, right) = pads
        d_x = d_xp[:, top:padded_shape[1] - bottom, left:padded_shape[2] - right, :]
        return d_x, d_w, d_b

    return x.graph.record('conv2d', (x, weights, bias), value, rule)


def _pool_windows(x):
    b, h, w, c = x.shape
    pad_h, pad_w = h % 2, w % 2
    if pad_h or pad_w:
        # odd extents: -inf on the bottom/right keeps every maximum
        x = np.pad(x, ((0, 0), (0, pad_h), (0, pad_w), (0, 0)), constant_values=-np.inf)

    h2, w2 = x.shape[1] // 2, x.shape[2] // 2
    windows = x.reshape(b, h2, 2, w2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(b, h2, w2, c, 4)
    return windows, (pad_h, pad_w)


def maxpool2x2_forward(x):
    x, single = _batched(x, 4)
    windows, _ = _pool_windows(x)
    out = windows.max(axis=-1)
    return out[0] if single else out


def maxpool2x2(x):
    windows, (pad_h, pad_w) = _pool_windows(x.value)
    # argmax picks the first index on ties
    winners = windows.argmax(axis=-1)
    value = np.take_along_axis(windows, winners[..., None], axis=-1)[..., 0]
    b, h, w, c = x.shape

    def rule(g):
        routed = np.zeros(windows.shape, dtype=g.dtype)
        np.put_along_axis(routed, winners[..., None], g[..., None], axis=-1)
        h2, w2 = routed.shape[1:3]
        full = routed.reshape(b, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(b, 2 * h2, 2 * w2, c)
        return (full[:, :h, :w, :],)

    return x.graph.record('maxpool2x2', (x,), value, rule)


def dense_forward(x, weights, bias):
    if x.shape[-1] != weights.shape[0]:
        raise ShapeError('dense: input width {} does not match weights {}'.format(x.shape[-1], weights.shape))
    return x @ weights + bias


def dense(x, weights, bias):
    value = dense_forward(x.value, weights.value, bias.value)

    def rule(g):
        return g @ weights.value.T, x.value.T @ g, g.sum(axis=0)

    return x.graph.record('dense', (x, weights, bias), value, rule)


def softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_labels(labels, classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise LabelError('Labels must lie in [0, {}), got range [{}, {}]'.format(classes, labels.min(), labels.max()))
    return labels


def softmax_cross_entropy_forward(logits, label):
    """-log p[label] for a single logit vector."""
    label = int(_check_labels([label], logits.shape[-1])[0])
    shifted = logits - logits.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[label])


def softmax_cross_entropy(logits, labels, normalizer=None):
    """Sum of per-sample -log p[label] divided by `normalizer` (defaults to the batch size)."""
    labels = _check_labels(labels, logits.shape[-1])
    if labels.shape != logits.shape[:1]:
        raise ShapeError('softmax_cross_entropy: {} labels for logits {}'.format(labels.shape, logits.shape))

    normalizer = normalizer or labels.size
    shifted = logits.value - logits.value.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1))
    rows = np.arange(labels.size)
    value = np.asarray((log_z - shifted[rows, labels]).sum() / normalizer, dtype=logits.value.dtype)

    def rule(g):
        d = softmax(logits.value)
        d[rows, labels] -= 1
        return (d * (g / normalizer),)

    return logits.graph.record('softmax_cross_entropy', (logits,), value, rule)


class Conv2d(Layer):
    kind = 'conv'

    def __init__(self, name, cin, cout, rng, kernel=3, stride=1, padding=SAME, group='backbone'):
        super().__init__(name, group)
        self.stride = stride
        self.padding = padding
        fan_in, fan_out = conv_fans(kernel, kernel, cin, cout)
        self.weights = self.add_param('weights', glorot_init((kernel, kernel, cin, cout), fan_in, fan_out, rng))
        self.bias = self.add_param('bias', T.zeros(cout))

    def forward(self, graph, x):
        return conv2d(x, graph.param(self.weights), graph.param(self.bias), self.stride, self.padding)

    def describe(self):
        kh, kw, cin, cout = self.weights.shape
        return 'conv{}x{}({}->{})'.format(kh, kw, cin, cout)


class MaxPool(Layer):
    kind = 'pool'

    def forward(self, graph, x):
        return maxpool2x2(x)

    def describe(self):
        return 'maxpool2x2'


class Relu(Layer):
    kind = 'relu'

    def forward(self, graph, x):
        return F.relu(x)


class Flatten(Layer):
    kind = 'flatten'

    def forward(self, graph, x):
        return F.flatten(x)


class MeanPool(Layer):
    """Average of the per-site fibers: B x N x D -> B x D."""
    kind = 'meanpool'

    def forward(self, graph, x):
        return F.mean_rows(x)


class Dense(Layer):
    kind = 'fc'

    def __init__(self, name, din, dout, rng, group='head'):
        super().__init__(name, group)
        self.weights = self.add_param('weights', glorot_init((din, dout), din, dout, rng))
        self.bias = self.add_param('bias', T.zeros(dout))

    def forward(self, graph, x):
        return dense(x, graph.param(self.weights), graph.param(self.bias))

    def describe(self):
        return 'fc({}->{})'.format(*self.weights.shape)
