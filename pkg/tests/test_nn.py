import numpy as np
import numpy.testing as npt
import pytest

from engine.autodiff import Graph, finite_diff_check, check_parameters
from engine import functional as F
from layers.nn import (conv2d, conv2d_forward, maxpool2x2, maxpool2x2_forward, dense_forward, softmax,
                       softmax_cross_entropy, softmax_cross_entropy_forward, Conv2d, Dense, MaxPool, VALID)
from utils.errors import ShapeError, LabelError


def test_conv_same_padding_counts_neighbours():
    out = conv2d_forward(np.ones((3, 3, 1)), np.ones((3, 3, 1, 1)), np.zeros(1))
    npt.assert_array_equal(out[..., 0], [[4, 6, 4], [6, 9, 6], [4, 6, 4]])


def test_conv_pointwise_kernel_is_a_matmul():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 4, 5, 3))
    w = rng.standard_normal((1, 1, 3, 2))
    b = rng.standard_normal(2)
    npt.assert_allclose(conv2d_forward(x, w, b), x @ w[0, 0] + b, atol=1e-12)


def test_conv_valid_and_stride_shapes():
    x = np.zeros((1, 7, 7, 2))
    assert conv2d_forward(x, np.zeros((3, 3, 2, 4)), np.zeros(4), padding=VALID).shape == (1, 5, 5, 4)
    assert conv2d_forward(x, np.zeros((3, 3, 2, 4)), np.zeros(4), stride=2).shape == (1, 4, 4, 4)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        conv2d_forward(np.zeros((4, 4, 2)), np.zeros((3, 3, 3, 1)), np.zeros(1))


@pytest.mark.parametrize('stride,padding', [(1, 'same'), (2, 'same'), (1, 'valid')])
def test_conv_gradients(stride, padding):
    rng = np.random.default_rng(stride)
    w = rng.standard_normal((3, 3, 2, 3))
    b = rng.standard_normal(3)

    def f(graph, x):
        return F.sum_squares(conv2d(x, graph.constant(w), graph.constant(b), stride, padding))

    assert finite_diff_check(f, rng.standard_normal((2, 5, 6, 2))) < 1e-6


def test_maxpool_values():
    x = np.arange(16, dtype=np.float64).reshape(4, 4, 1)
    npt.assert_array_equal(maxpool2x2_forward(x)[..., 0], [[5, 7], [13, 15]])

    odd = -np.arange(9, dtype=np.float64).reshape(3, 3, 1)
    npt.assert_array_equal(maxpool2x2_forward(odd)[..., 0], [[0, -2], [-6, -8]])


def test_maxpool_routes_gradient_to_first_maximum():
    graph = Graph()
    x = graph.leaf(np.ones((1, 2, 2, 1)))
    graph.backward(F.total(maxpool2x2(x)))
    npt.assert_array_equal(x.grad[0, ..., 0], [[1, 0], [0, 0]])


def test_dense_shapes():
    assert dense_forward(np.ones((3, 4)), np.ones((4, 2)), np.zeros(2)).shape == (3, 2)
    with pytest.raises(ShapeError):
        dense_forward(np.ones((3, 5)), np.ones((4, 2)), np.zeros(2))


def test_softmax_cross_entropy_values():
    assert softmax_cross_entropy_forward(np.zeros(10), 3) == pytest.approx(np.log(10))
    npt.assert_allclose(softmax(np.array([[1000.0, 1000.0]])), [[0.5, 0.5]])

    graph = Graph()
    logits = graph.leaf(np.array([[2.0, 0.0], [0.0, 2.0]]))
    loss = softmax_cross_entropy(logits, [0, 1])
    assert float(loss.value) == pytest.approx(np.log(1 + np.exp(-2.0)))


def test_softmax_cross_entropy_label_range():
    with pytest.raises(LabelError):
        softmax_cross_entropy_forward(np.zeros(3), 3)

    graph = Graph()
    with pytest.raises(LabelError):
        softmax_cross_entropy(graph.leaf(np.zeros((2, 3))), [0, -1])


def test_softmax_cross_entropy_gradient():
    labels = np.array([0, 2, 1, 2])
    f = lambda graph, node: softmax_cross_entropy(node, labels)
    assert finite_diff_check(f, np.random.default_rng(5).standard_normal((4, 3))) < 1e-8


def test_layer_parameter_counts():
    rng = np.random.default_rng(0)
    assert Conv2d('conv', 3, 16, rng).param_count() == 3 * 3 * 3 * 16 + 16
    assert Dense('fc', 3136, 500, rng).param_count() == 3136 * 500 + 500
    assert MaxPool('pool').param_count() == 0


def test_conv_init_is_glorot_with_zero_bias():
    layer = Conv2d('conv', 4, 8, np.random.default_rng(0))
    bound = np.sqrt(6.0 / (9 * 4 + 9 * 8))
    assert np.abs(layer.weights.value).max() <= bound
    npt.assert_array_equal(layer.bias.value, 0.0)


def test_conv_layer_parameter_gradients():
    rng = np.random.default_rng(9)
    layer = Conv2d('conv', 2, 3, rng)
    layer.bias.value[:] = rng.standard_normal(3)
    x = rng.standard_normal((1, 4, 4, 2))
    report = check_parameters(lambda graph: F.sum_squares(layer(graph, graph.constant(x))), layer.params)
    assert max(report.values()) < 1e-6


def naive_conv(x, w, b, stride, padding):
    h, wd, cin = x.shape
    kh, kw, _, cout = w.shape
    if padding == VALID:
        top = left = 0
        ho, wo = (h - kh) // stride + 1, (wd - kw) // stride + 1
    else:
        ho, wo = -(-h // stride), -(-wd // stride)
        top = max((ho - 1) * stride + kh - h, 0) // 2
        left = max((wo - 1) * stride + kw - wd, 0) // 2

    out = np.zeros((ho, wo, cout))
    for i in range(ho):
        for j in range(wo):
            for co in range(cout):
                total = b[co]
                for ki in range(kh):
                    for kj in range(kw):
                        for ci in range(cin):
                            r, c = i * stride + ki - top, j * stride + kj - left
                            if 0 <= r < h and 0 <= c < wd:
                                total += x[r, c, ci] * w[ki, kj, ci, co]
                out[i, j, co] = total
    return out


@pytest.mark.parametrize('seed', range(10))
def test_conv_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.choice([1, 3]))
    stride = int(rng.integers(1, 3))
    padding = VALID if seed % 2 else 'same'
    x = rng.standard_normal((int(rng.integers(k, 8)), int(rng.integers(k, 8)), int(rng.integers(1, 4))))
    w = rng.standard_normal((k, k, x.shape[2], int(rng.integers(1, 4))))
    b = rng.standard_normal(w.shape[3])

    npt.assert_allclose(conv2d_forward(x, w, b, stride, padding), naive_conv(x, w, b, stride, padding), atol=1e-12)


def test_softmax_is_a_distribution():
    rng = np.random.default_rng(5)
    for _ in range(50):
        p = softmax(rng.standard_normal((4, int(rng.integers(2, 12)))) * 10)
        assert np.all(p > 0)
        npt.assert_allclose(p.sum(axis=-1), 1.0, rtol=0, atol=1e-12)
