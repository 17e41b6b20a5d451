"""Layer-level tests: brute-force forward oracles and central-difference
gradient oracles, all in float64 unless a test targets float32 behavior."""

import numpy as np
import pytest

from neuralogram.errors import ShapeError
from neuralogram.layers import (Conv2D, Dense, Dropout, MaxPool2D, ReLU,
                                Softmax, conv_spec, conv2d, conv2d_backward,
                                dense, dense_spec, dropout, dropout_spec,
                                euclid_softmax_loss, maxpool2d,
                                maxpool2d_backward, pool_spec, relu,
                                relu_spec, softmax, softmax_spec,
                                xavier_uniform)
from neuralogram.rng import Rng


def conv2d_bruteforce(x, k, b, stride=1):
    """Direct six-loop cross-correlation, the forward oracle."""
    n, c, h, w = x.shape
    f, _, kh, kw = k.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    y = np.zeros((n, f, ho, wo), dtype=np.float64)
    for ni in range(n):
        for fi in range(f):
            for i in range(ho):
                for j in range(wo):
                    patch = x[ni, :, i * stride: i * stride + kh,
                              j * stride: j * stride + kw]
                    y[ni, fi, i, j] = np.sum(patch * k[fi]) + b[fi]
    return y


def fd_grad(loss_fn, arr, eps=1e-5):
    """Central-difference gradient of a scalar function wrt every entry."""
    g = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        lp = loss_fn()
        flat[i] = orig - eps
        lm = loss_fn()
        flat[i] = orig
        gflat[i] = (lp - lm) / (2 * eps)
    return g


def rel_err(a, b):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return np.max(np.abs(a - b) / denom)


def rand(rng, *shape):
    return (rng.uniform(int(np.prod(shape))) * 2 - 1).reshape(shape)


# ---------------------------------------------------------------------------
# conv2d
# ---------------------------------------------------------------------------


def test_conv2d_identity_kernel():
    x = rand(Rng(1), 2, 1, 5, 6)
    k = np.ones((1, 1, 1, 1))
    y = conv2d(x, k, np.zeros(1))
    assert np.allclose(y, x)


def test_conv2d_ones_kernel_counts_window():
    x = np.ones((1, 1, 6, 7))
    k = np.ones((1, 1, 3, 3))
    y = conv2d(x, k, np.zeros(1))
    assert y.shape == (1, 1, 4, 5)
    assert np.allclose(y, 9.0)


def test_conv2d_matches_bruteforce():
    rng = Rng(7)
    x = rand(rng, 2, 3, 8, 8)
    k = rand(rng, 4, 3, 3, 3)
    b = rand(rng, 4)
    y = conv2d(x, k, b)
    assert y.shape == (2, 4, 6, 6)
    assert np.allclose(y, conv2d_bruteforce(x, k, b), atol=1e-12)


def test_conv2d_stride_2_matches_bruteforce():
    rng = Rng(8)
    x = rand(rng, 1, 2, 9, 11)
    k = rand(rng, 3, 2, 3, 3)
    b = rand(rng, 3)
    y = conv2d(x, k, b, stride=2)
    assert y.shape == (1, 3, 4, 5)
    assert np.allclose(y, conv2d_bruteforce(x, k, b, stride=2), atol=1e-12)


def test_conv2d_linearity_in_input():
    rng = Rng(9)
    k = rand(rng, 2, 3, 3, 3)
    b = np.zeros(2)
    x1 = rand(rng, 2, 3, 8, 8)
    x2 = rand(rng, 2, 3, 8, 8)
    a1, a2 = 0.7, -1.3
    lhs = conv2d(a1 * x1 + a2 * x2, k, b)
    rhs = a1 * conv2d(x1, k, b) + a2 * conv2d(x2, k, b)
    assert np.max(np.abs(lhs - rhs)) < 1e-10
    lhs32 = conv2d((a1 * x1 + a2 * x2).astype(np.float32),
                   k.astype(np.float32), b.astype(np.float32))
    rhs32 = (a1 * conv2d(x1.astype(np.float32), k.astype(np.float32),
                         b.astype(np.float32)) +
             a2 * conv2d(x2.astype(np.float32), k.astype(np.float32),
                         b.astype(np.float32)))
    assert np.max(np.abs(lhs32 - rhs32)) < 1e-5


def test_conv2d_gradients_match_finite_differences():
    rng = Rng(11)
    x = rand(rng, 2, 3, 8, 8)
    k = rand(rng, 4, 3, 3, 3)
    b = rand(rng, 4)
    r = rand(rng, 2, 4, 6, 6)       # fixed weighting makes the output scalar

    dx, dk, db = conv2d_backward(x, k, b, r.copy())

    def loss():
        return float(np.sum(conv2d(x, k, b) * r))

    assert rel_err(dx, fd_grad(loss, x)) < 1e-4
    assert rel_err(dk, fd_grad(loss, k)) < 1e-4
    assert rel_err(db, fd_grad(loss, b)) < 1e-4


def test_conv2d_stride2_gradients_match_finite_differences():
    rng = Rng(12)
    x = rand(rng, 1, 2, 8, 9)
    k = rand(rng, 2, 2, 3, 3)
    b = rand(rng, 2)
    r = rand(rng, 1, 2, 3, 4)
    dx, dk, db = conv2d_backward(x, k, b, r.copy(), stride=2)

    def loss():
        return float(np.sum(conv2d(x, k, b, stride=2) * r))

    assert rel_err(dx, fd_grad(loss, x)) < 1e-4
    assert rel_err(dk, fd_grad(loss, k)) < 1e-4
    assert rel_err(db, fd_grad(loss, b)) < 1e-4


def test_conv2d_shape_errors():
    with pytest.raises(ShapeError):
        conv2d(np.zeros((1, 2, 8, 8)), np.zeros((1, 3, 3, 3)), np.zeros(1))
    with pytest.raises(ShapeError):
        conv2d(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 3, 3)), np.zeros(1))


# ---------------------------------------------------------------------------
# maxpool2d
# ---------------------------------------------------------------------------


def test_maxpool_identity_and_window_max():
    x = rand(Rng(2), 1, 1, 4, 4)
    assert np.allclose(maxpool2d(x, 1, 1), x)
    y = maxpool2d(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), 2, 2)
    assert y.shape == (1, 1, 1, 1)
    assert y[0, 0, 0, 0] == 4.0


def test_maxpool_rectangular_and_padding():
    x = np.arange(15, dtype=np.float64).reshape(1, 1, 3, 5)
    y = maxpool2d(x, 2, 2)          # pads 3x5 -> 4x6 with -inf
    assert y.shape == (1, 1, 2, 3)
    assert np.allclose(y[0, 0], [[6, 8, 9], [11, 13, 14]])
    y2 = maxpool2d(x, 1, 5)
    assert y2.shape == (1, 1, 3, 1)
    assert np.allclose(y2[0, 0, :, 0], [4, 9, 14])


def test_maxpool_gradient_matches_finite_differences():
    rng = Rng(13)
    x = rand(rng, 1, 2, 6, 8)       # continuous random input: no ties
    r = rand(rng, 1, 2, 3, 8)
    dx = maxpool2d_backward(x, 2, 1, r.copy())

    def loss():
        return float(np.sum(maxpool2d(x, 2, 1) * r))

    assert rel_err(dx, fd_grad(loss, x)) < 1e-4


def test_maxpool_backward_routes_to_argmax_only():
    x = np.array([[[[1.0, 5.0], [3.0, 2.0]]]])
    dx = maxpool2d_backward(x, 2, 2, np.array([[[[2.0]]]]))
    assert np.allclose(dx, [[[[0, 2], [0, 0]]]])


# ---------------------------------------------------------------------------
# dense
# ---------------------------------------------------------------------------


def test_dense_identity_and_bias():
    x = rand(Rng(3), 4, 5)
    assert np.allclose(dense(x, np.eye(5), np.zeros(5)), x)
    b = np.arange(3.0)
    y = dense(x, np.zeros((5, 3)), b)
    assert np.allclose(y, np.tile(b, (4, 1)))


def test_dense_layer_gradients_match_finite_differences():
    rng = Rng(14)
    layer = Dense(dense_spec(4), in_features=6)
    w = rand(rng, 6, 4)
    b = rand(rng, 4)
    layer.set_param("weight", w)
    layer.set_param("bias", b)
    x = rand(rng, 3, 6)
    r = rand(rng, 3, 4)

    layer.forward(x.copy(), train=False)
    dx = layer.backward(r.copy()).copy()
    dw, db = layer.g_weight.copy(), layer.g_bias.copy()

    def loss():
        lay = Dense(dense_spec(4), in_features=6)
        lay.set_param("weight", w)
        lay.set_param("bias", b)
        return float(np.sum(lay.forward(x.copy(), train=False) * r))

    assert rel_err(dx, fd_grad(loss, x)) < 1e-4
    assert rel_err(dw, fd_grad(loss, w)) < 1e-4
    assert rel_err(db, fd_grad(loss, b)) < 1e-4


def test_dense_layer_flattens_channel_major_input():
    rng = Rng(15)
    layer = Dense(dense_spec(2), in_features=2 * 3 * 4)
    w = rand(rng, 24, 2)
    layer.set_param("weight", w)
    layer.set_param("bias", np.zeros(2))
    x_int = rand(rng, 2, 5, 3, 4)           # internal (C, N, H, W)
    y = layer.forward(x_int.copy(), train=False)
    # sample n's flattened features are (c, h, w)-ordered
    xf = x_int.transpose(1, 0, 2, 3).reshape(5, -1)
    assert np.allclose(y, xf @ w)


# ---------------------------------------------------------------------------
# relu / dropout / softmax
# ---------------------------------------------------------------------------


def test_relu_forward_and_backward():
    x = np.array([[-1.0, 0.0, 2.0]])
    assert np.allclose(relu(x), [[0, 0, 2]])
    layer = ReLU(relu_spec())
    y = layer.forward(x.copy(), train=False)
    assert np.allclose(y, [[0, 0, 2]])
    dx = layer.backward(np.array([[5.0, 5.0, 5.0]]))
    assert np.allclose(dx, [[0, 0, 5]])


def test_relu_functional_does_not_modify_input():
    x = np.array([-1.0, 1.0])
    relu(x)
    assert np.allclose(x, [-1.0, 1.0])


def test_dropout_eval_is_identity():
    x = rand(Rng(4), 10, 10)
    layer = Dropout(dropout_spec(0.5))
    layer.rng = Rng(99)
    assert np.array_equal(layer.forward(x.copy(), train=False), x)
    assert np.array_equal(dropout(x, 0.5, Rng(99), train=False), x)


def test_dropout_train_mean_preserved():
    x = np.ones(100_000)
    y = dropout(x, 0.5, Rng(123), train=True)
    kept = y > 0
    assert np.allclose(y[kept], 2.0)
    assert abs(y.mean() - 1.0) < 0.02


def test_dropout_layer_backward_uses_same_mask():
    layer = Dropout(dropout_spec(0.5))
    layer.rng = Rng(5)
    x = np.ones((20, 20), dtype=np.float32)
    y = layer.forward(x.copy(), train=True)
    d = layer.backward(np.ones((20, 20), dtype=np.float32))
    assert np.array_equal(d, y)    # same mask, same scaling


def test_softmax_basics():
    assert np.allclose(softmax(np.array([0.0, 0.0])), [0.5, 0.5])
    z = rand(Rng(6), 5, 9)
    p = softmax(z, axis=-1)
    assert np.allclose(p.sum(axis=-1), 1.0, atol=1e-6)
    p2 = softmax(z + 3.7, axis=-1)   # constant shift per row
    assert np.max(np.abs(p - p2)) < 1e-6
    assert np.allclose(softmax(np.array([1000.0, 1000.0])), [0.5, 0.5])


def test_softmax_layer_backward_matches_finite_differences():
    rng = Rng(16)
    x = rand(rng, 3, 5)
    r = rand(rng, 3, 5)
    layer = Softmax(softmax_spec())
    layer.forward(x.copy(), train=False)
    dx = layer.backward(r.copy())

    def loss():
        return float(np.sum(softmax(x, axis=-1) * r))

    assert rel_err(dx, fd_grad(loss, x)) < 1e-4


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def test_loss_uniform_vs_onehot():
    logits = np.array([[0.0, 0.0]])
    loss, _ = euclid_softmax_loss(logits, np.array([[1.0, 0.0]]))
    assert abs(loss - 0.5) < 1e-12


def test_loss_peaked_limit():
    logits = np.array([[30.0, -30.0, -30.0]])
    loss, _ = euclid_softmax_loss(logits, np.array([[1.0, 0.0, 0.0]]))
    assert loss < 1e-12


def test_loss_gradient_matches_finite_differences():
    rng = Rng(17)
    logits = rand(rng, 3, 7)
    targets = (rand(rng, 3, 7) > 0).astype(np.float64)
    targets[0] = 0
    targets[0, 2] = 1               # mix of one-hot and multi-hot rows
    _, dlogits = euclid_softmax_loss(logits, targets)

    def loss():
        return euclid_softmax_loss(logits, targets)[0]

    assert rel_err(dlogits, fd_grad(loss, logits)) < 1e-4


def test_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        euclid_softmax_loss(np.zeros((2, 3)), np.zeros((2, 4)))


# ---------------------------------------------------------------------------
# xavier init
# ---------------------------------------------------------------------------


def test_xavier_bounds_mean_variance():
    fan_in, fan_out = 300, 200
    a = np.sqrt(6.0 / (fan_in + fan_out))
    w = xavier_uniform((100_000,), fan_in, fan_out, Rng(21), np.float64)
    assert np.all(w >= -a) and np.all(w <= a)
    assert abs(w.mean()) < 0.01 * a
    var_expected = 2.0 / (fan_in + fan_out)
    assert abs(w.var() - var_expected) < 0.05 * var_expected


# ---------------------------------------------------------------------------
# buffer reuse across calls
# ---------------------------------------------------------------------------


def test_conv_layer_buffers_are_reused_and_results_stable():
    rng = Rng(22)
    layer = Conv2D(conv_spec(4), in_channels=3)
    layer.init_params(Rng(1), np.float32)
    x = rand(rng, 3, 2, 10, 12).astype(np.float32)   # internal (C,N,H,W)
    y1 = layer.forward(x.copy(), train=True).copy()
    y2 = layer.forward(x.copy(), train=True)
    assert np.array_equal(y1, y2)
    x2 = rand(rng, 3, 4, 6, 6).astype(np.float32)    # different shape: realloc
    y3 = layer.forward(x2.copy(), train=True)
    assert y3.shape == (4, 4, 4, 4)


def test_maxpool_layer_shape_change():
    layer = MaxPool2D(pool_spec(2, 2))
    a = layer.forward(rand(Rng(23), 2, 1, 6, 6), train=False).copy()
    b = layer.forward(rand(Rng(23), 2, 1, 6, 6), train=False)
    assert np.array_equal(a, b)
    c = layer.forward(rand(Rng(24), 2, 3, 5, 7), train=False)
    assert c.shape == (2, 3, 3, 4)
