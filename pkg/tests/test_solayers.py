import numpy as np
import numpy.testing as npt
import pytest

from engine.autodiff import Graph, finite_diff_check
from engine import functional as F
from layers import solayers as so
from layers.nn import conv2d_forward
from optim.init import orthonormal_rows
from utils.errors import ShapeError, ConfigError

ALPHA = 0.75


def random_features(rng, n=12, d=5):
    return rng.standard_normal((n, d)) * rng.uniform(0.2, 3.0, size=d) + rng.standard_normal(d)


def test_cov_of_two_points():
    sigma, mu = so.cov_forward(np.array([[1.0, 0.0], [-1.0, 0.0]]))
    npt.assert_array_equal(sigma, [[1.0, 0.0], [0.0, 0.0]])
    npt.assert_array_equal(mu, [0.0, 0.0])


def test_cov_of_constant_rows_is_zero():
    sigma, mu = so.cov_forward(np.tile([2.0, -1.0, 4.0], (6, 1)))
    npt.assert_allclose(sigma, 0.0, atol=1e-15)
    npt.assert_allclose(mu, [2.0, -1.0, 4.0])


def test_cov_errors():
    with pytest.raises(ShapeError):
        so.cov_forward(np.zeros((0, 3)))
    with pytest.raises(ShapeError):
        so.cov_forward(np.zeros(3))


def test_cov_matches_numpy():
    x = random_features(np.random.default_rng(0))
    sigma, _ = so.cov_forward(x)
    npt.assert_allclose(sigma, np.cov(x, rowvar=False, bias=True), atol=1e-12)


def test_cov_and_augment_spd_invariants():
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = random_features(rng, n=int(rng.integers(2, 20)))
        out = so.cov_layer_forward(x, augment=True)
        assert np.linalg.eigvalsh(out.sigma).min() >= -1e-9
        assert np.linalg.eigvalsh(out.C).min() >= -1e-9
        assert out.C[-1, -1] == 1.0
        npt.assert_array_equal(out.C, out.C.T)


def test_augment_layout():
    sigma = np.array([[2.0, 0.5], [0.5, 1.0]])
    mu = np.array([1.0, -2.0])
    c = so.cov_augment(sigma, mu, beta=0.5)
    npt.assert_allclose(c[:2, :2], sigma + 0.25 * np.outer(mu, mu))
    npt.assert_allclose(c[:2, 2], 0.5 * mu)
    npt.assert_allclose(c[2, :2], 0.5 * mu)


def test_o2t_preserves_psd():
    rng = np.random.default_rng(2)
    for _ in range(100):
        sigma, _ = so.cov_forward(random_features(rng))
        w = rng.standard_normal((int(rng.integers(1, 8)), 5))
        y = so.o2t_forward(sigma, w)
        npt.assert_array_equal(y, y.T)
        assert np.linalg.eigvalsh(y).min() >= -1e-9 * max(1.0, np.abs(y).max())


def test_orthonormal_o2t_preserves_rank():
    rng = np.random.default_rng(3)
    for _ in range(20):
        sigma, _ = so.cov_forward(rng.standard_normal((4, 8)))
        w = orthonormal_rows(rng.standard_normal((8, 8)))
        y = so.o2t_forward(sigma, w)

        def rank(m):
            s = np.linalg.eigvalsh(m)
            return int(np.sum(s > 1e-8 * s.max()))

        assert rank(y) == rank(sigma) == 3


def test_o2t_shape_check():
    with pytest.raises(ShapeError):
        so.o2t_forward(np.eye(3), np.ones((2, 4)))


def test_pv_formulations_agree():
    rng = np.random.default_rng(4)
    for _ in range(100):
        y = rng.standard_normal((6, 6))
        y = y + y.T
        w = rng.standard_normal((6, int(rng.integers(1, 9))))
        npt.assert_allclose(so.pv_forward(y, w), so.pv_forward_quadratic(y, w), rtol=0, atol=1e-12)


def test_pv_of_identity_weights_is_diagonal():
    y = np.diag([1.0, 2.0, 3.0]) + 0.5
    npt.assert_allclose(so.pv_forward(y, np.eye(3)), np.diag(y))


def test_robust_transfer_constants():
    f = so.robust_transfer(ALPHA)
    assert f.f(np.array(0.0)) == pytest.approx(1 / 6)
    assert f.f(np.array(-3.0)) == pytest.approx(1 / 6)
    assert f.derivative(np.array(-1.0)) == 0.0
    with pytest.raises(ConfigError):
        so.robust_transfer(0.0)
    with pytest.raises(ConfigError):
        so.robust_transfer(1.5)


def test_robust_rectify_lifts_rank_deficient_covariance():
    rng = np.random.default_rng(5)
    floor = so.robust_transfer(ALPHA).f(np.array(0.0))
    for _ in range(100):
        sigma, _ = so.cov_forward(rng.standard_normal((3, 6)))
        rectified = so.robust_rectify(sigma, ALPHA)
        assert np.linalg.eigvalsh(rectified).min() >= floor - 1e-9


def test_identity_transfer_reconstructs_input():
    sigma, _ = so.cov_forward(random_features(np.random.default_rng(6)))
    npt.assert_allclose(so.robust_rectify(sigma, transfer=so.IDENTITY_TRANSFER), sigma, atol=1e-10)


def test_robust_rectify_batched():
    rng = np.random.default_rng(7)
    batch = np.stack([so.cov_forward(random_features(rng))[0] for _ in range(3)])
    out = so.robust_rectify(batch, ALPHA)
    npt.assert_allclose(out[1], so.robust_rectify(batch[1], ALPHA))


def test_transition_is_a_pointwise_convolution():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((4, 5, 6))
    w = rng.standard_normal((3, 6))
    b = rng.standard_normal(3)
    sites = so.transition_forward(x.reshape(20, 6), w, b)
    conv = conv2d_forward(x, w.T.reshape(1, 1, 6, 3), b)
    npt.assert_allclose(sites, conv.reshape(20, 3), atol=1e-12)


def test_covariance_gradient():
    def f(graph, x):
        sigma, mu = so.covariance(x)
        return F.add(F.sum_squares(sigma), F.sum_squares(mu))

    assert finite_diff_check(f, random_features(np.random.default_rng(9))[None]) < 1e-6


def test_rectify_gradient():
    rng = np.random.default_rng(10)
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    sigma = (q * np.array([0.5, 1.2, 2.0, 3.1])) @ q.T
    weights = rng.standard_normal((4, 4))
    f = lambda graph, node: F.total(F.hadamard(so.rectify(node, ALPHA), graph.constant(weights)))
    assert finite_diff_check(f, sigma) < 1e-6


def test_cov_layer_variants():
    graph = Graph()
    x = graph.constant(random_features(np.random.default_rng(11))[None])
    assert so.Cov('cov', augment=True)(graph, x).shape == (1, 6, 6)
    assert so.Cov('cov', augment=False, robust=True)(graph, x).shape == (1, 5, 5)


def test_orthonormal_o2t_layer():
    layer = so.O2T('o2t', 6, 4, np.random.default_rng(0), orthonormal=True)
    w = layer.weights.value
    npt.assert_allclose(w @ w.T, np.eye(4), atol=1e-12)
    assert layer.weights.manifold == 'stiefel'
    with pytest.raises(ConfigError):
        so.O2T('o2t', 4, 6, np.random.default_rng(0), orthonormal=True)


def test_layer_parameter_counts():
    rng = np.random.default_rng(0)
    assert so.O2T('o2t', 65, 50, rng).param_count() == 3250
    assert so.PV('pv', 400, 400, rng).param_count() == 160000
    assert so.Transition('transition', 64, 32, rng).param_count() == 64 * 32 + 32


def test_cov_is_invariant_to_row_order():
    rng = np.random.default_rng(12)
    for _ in range(20):
        x = random_features(rng, n=int(rng.integers(2, 30)))
        sigma, mu = so.cov_forward(x)
        shuffled, shuffled_mu = so.cov_forward(x[rng.permutation(len(x))])
        npt.assert_allclose(shuffled, sigma, rtol=0, atol=1e-12)
        npt.assert_allclose(shuffled_mu, mu, rtol=0, atol=1e-12)


def test_cov_scales_quadratically():
    rng = np.random.default_rng(13)
    for c in (-3.0, 0.1, 2.5, 40.0):
        x = random_features(rng)
        npt.assert_allclose(so.cov_forward(c * x)[0], c * c * so.cov_forward(x)[0], rtol=1e-10, atol=1e-12)


def test_compressing_o2t_preserves_rank():
    rng = np.random.default_rng(14)
    for dout in (3, 4, 5, 7):
        sigma, _ = so.cov_forward(rng.standard_normal((4, 8)))
        y = so.o2t_forward(sigma, rng.standard_normal((dout, 8)))

        s = np.linalg.eigvalsh(y)
        assert int(np.sum(s > 1e-8 * s.max())) == 3
