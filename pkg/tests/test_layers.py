import numpy as np
import pytest

from detmon.tensornet import (
    AdamState,
    adam_step,
    adaptive_avg_pool,
    adaptive_avg_pool_backward,
    concat_channels,
    concat_channels_backward,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    relu,
    relu_backward,
    sigmoid,
    softplus,
)

from oracles import finite_difference_grad, naive_conv2d


def rel_err(analytic, numeric):
    scale = max(np.abs(analytic).max(initial=0), np.abs(numeric).max(initial=0), 1e-8)
    return np.abs(analytic - numeric).max(initial=0) / scale


# --- convolution -----------------------------------------------------------------


def test_conv_1x1_identity():
    x = np.arange(12, dtype=np.float64).reshape(1, 3, 4)
    weight = np.ones((1, 1, 1, 1))
    y = conv2d_forward(x, weight, np.zeros(1))
    assert np.array_equal(y, x)


def test_conv_hand_sum():
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    weight = np.ones((1, 1, 2, 2))
    y = conv2d_forward(x, weight, np.zeros(1))
    assert y.shape == (1, 1, 1)
    assert y[0, 0, 0] == 10.0


@pytest.mark.parametrize("seed", range(6))
def test_conv_matches_six_loop_reference(seed):
    rng = np.random.default_rng(seed)
    c_in, c_out = rng.integers(1, 4, 2)
    k = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 3))
    padding = int(rng.integers(0, 2))
    h = int(rng.integers(k, k + 5))
    w = int(rng.integers(k, k + 5))
    x = rng.standard_normal((c_in, h, w))
    weight = rng.standard_normal((c_out, c_in, k, k))
    bias = rng.standard_normal(c_out)
    got = conv2d_forward(x, weight, bias, stride, padding)
    want = naive_conv2d(x, weight, bias, stride, padding)
    np.testing.assert_allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_conv_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    c_in, c_out, k = int(rng.integers(1, 3)), int(rng.integers(1, 3)), 3
    stride = int(rng.integers(1, 3))
    h = w = int(rng.integers(4, 7))
    x = rng.standard_normal((c_in, h, w))
    weight = rng.standard_normal((c_out, c_in, k, k))
    bias = rng.standard_normal(c_out)
    cotangent = rng.standard_normal(conv2d_forward(x, weight, bias, stride, 1).shape)

    def loss_of(xx, ww, bb):
        return float(np.sum(conv2d_forward(xx, ww, bb, stride, 1) * cotangent))

    gx, gw, gb = conv2d_backward(x, weight, cotangent, stride, 1)
    assert rel_err(gx, finite_difference_grad(lambda v: loss_of(v, weight, bias), x)) < 1e-6
    assert rel_err(gw, finite_difference_grad(lambda v: loss_of(x, v, bias), weight)) < 1e-6
    assert rel_err(gb, finite_difference_grad(lambda v: loss_of(x, weight, v), bias)) < 1e-6


def test_conv_rejects_channel_mismatch():
    with pytest.raises(ValueError, match="channels"):
        conv2d_forward(np.zeros((2, 4, 4)), np.zeros((1, 3, 3, 3)), np.zeros(1))


# --- dense / relu / pool / concat ----------------------------------------------------


def test_dense_gradients():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((4, 5))
    weight = rng.standard_normal((3, 5))
    bias = rng.standard_normal(3)
    cot = rng.standard_normal((4, 3))

    def loss_of(xx, ww, bb):
        return float(np.sum(dense_forward(xx, ww, bb) * cot))

    gx, gw, gb = dense_backward(x, weight, cot)
    assert rel_err(gx, finite_difference_grad(lambda v: loss_of(v, weight, bias), x)) < 1e-6
    assert rel_err(gw, finite_difference_grad(lambda v: loss_of(x, v, bias), weight)) < 1e-6
    assert rel_err(gb, finite_difference_grad(lambda v: loss_of(x, weight, v), bias)) < 1e-6


def test_relu_gradient():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((6, 6)) + 0.05  # keep away from the kink
    cot = rng.standard_normal((6, 6))
    grad = relu_backward(x, cot)
    fd = finite_difference_grad(lambda v: float(np.sum(relu(v) * cot)), x)
    assert rel_err(grad, fd) < 1e-6


def test_pool_constant_channel():
    x = np.full((3, 4, 5), 7.0)
    assert np.allclose(adaptive_avg_pool(x), 7.0)


def test_pool_hand_mean():
    x = np.array([[[1.0, 3.0], [5.0, 7.0]]])
    assert adaptive_avg_pool(x) == pytest.approx(4.0)


def test_pool_1x1_identity():
    x = np.arange(3, dtype=np.float64).reshape(3, 1, 1)
    assert np.array_equal(adaptive_avg_pool(x), np.array([0.0, 1.0, 2.0]))


def test_pool_gradient():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 3, 4, 4))
    cot = rng.standard_normal((2, 3))
    grad = adaptive_avg_pool_backward(x.shape, cot)
    fd = finite_difference_grad(lambda v: float(np.sum(adaptive_avg_pool(v) * cot)), x)
    assert rel_err(grad, fd) < 1e-6


def test_concat_roundtrip():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((2, 3, 4, 4))
    b = rng.standard_normal((2, 5, 4, 4))
    joined = concat_channels(a, b)
    assert joined.shape == (2, 8, 4, 4)
    ga, gb = concat_channels_backward(joined, 3)
    assert np.array_equal(ga, a)
    assert np.array_equal(gb, b)


def test_sigmoid_softplus_stable():
    x = np.array([-1000.0, -10.0, 0.0, 10.0, 1000.0])
    s = sigmoid(x)
    assert np.all((s >= 0) & (s <= 1))
    assert s[2] == 0.5
    sp = softplus(x)
    assert np.all(np.isfinite(sp))
    assert sp[2] == pytest.approx(np.log(2.0))


# --- Adam -------------------------------------------------------------------------


def test_adam_zero_gradient_keeps_params():
    params = {"w": np.array([1.0, 2.0])}
    state = AdamState()
    adam_step(params, {"w": np.zeros(2)}, state, lr=0.1)
    assert np.array_equal(params["w"], [1.0, 2.0])
    assert state.step == 1


def test_adam_first_step_scalar_hand_calc():
    lr = 0.001
    params = {"w": np.zeros(())}
    state = AdamState()
    adam_step(params, {"w": np.asarray(1.0)}, state, lr)
    # m_hat = 1, v_hat = 1 after bias correction: step = -lr / (1 + eps)
    expected = -lr / (1.0 + 1e-8)
    assert params["w"] == pytest.approx(expected, rel=1e-12)


def test_adam_repeated_steps_deterministic():
    def run():
        rng = np.random.default_rng(5)
        params = {"w": rng.standard_normal(4).astype(np.float32)}
        state = AdamState()
        for _ in range(10):
            grads = {"w": rng.standard_normal(4).astype(np.float32)}
            adam_step(params, grads, state, 0.01)
        return params["w"].tobytes()

    assert run() == run()


def test_adam_rejects_non_finite_gradient():
    params = {"layer.weight": np.zeros(2)}
    with pytest.raises(FloatingPointError, match="layer.weight"):
        adam_step(params, {"layer.weight": np.array([1.0, np.nan])}, AdamState(), 0.1)
