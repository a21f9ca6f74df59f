"""Forward/backward pairs for the layers the monitor is built from.

Convolution is cross-correlation (no kernel flip). All functions accept a
single sample (c, h, w) or a batch (b, c, h, w) and work in whatever float
dtype the inputs carry, so gradient checks can run the engine in float64
while training runs in float32.
"""

from __future__ import annotations

import numpy as np


def _batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ValueError(f"expected (c,h,w) or (b,c,h,w), got shape {x.shape}")


def conv2d_forward(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray,
    stride: int = 1,
    padding: int = 0,
) -> np.ndarray:
    """2-D cross-correlation; output spatial dim floor((in + 2p - k)/s) + 1."""
    xb, squeeze = _batched(x)
    b, c_in, h, w = xb.shape
    c_out, c_in_w, kh, kw = weight.shape
    if c_in_w != c_in:
        raise ValueError(f"weight expects {c_in_w} input channels, input has {c_in}")
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ValueError(
            f"kernel {kh}x{kw} with stride {stride}, padding {padding} "
            f"does not fit a {h}x{w} input"
        )
    xp = np.pad(xb, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    y = np.zeros((b, c_out, h_out, w_out), dtype=xb.dtype)
    for ki in range(kh):
        for kj in range(kw):
            patch = xp[:, :, ki:ki + stride * h_out:stride, kj:kj + stride * w_out:stride]
            y += np.einsum("oc,bchw->bohw", weight[:, :, ki, kj], patch)
    y += bias.reshape(1, c_out, 1, 1)
    return y[0] if squeeze else y


def conv2d_backward(
    x: np.ndarray,
    weight: np.ndarray,
    grad_out: np.ndarray,
    stride: int = 1,
    padding: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (d_input, d_weight, d_bias) of conv2d_forward."""
    xb, squeeze = _batched(x)
    gb, _ = _batched(grad_out)
    b, c_in, h, w = xb.shape
    c_out, _, kh, kw = weight.shape
    _, _, h_out, w_out = gb.shape
    xp = np.pad(xb, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    grad_xp = np.zeros_like(xp)
    grad_w = np.zeros_like(weight)
    for ki in range(kh):
        for kj in range(kw):
            patch = xp[:, :, ki:ki + stride * h_out:stride, kj:kj + stride * w_out:stride]
            grad_w[:, :, ki, kj] = np.einsum("bohw,bchw->oc", gb, patch)
            grad_xp[:, :, ki:ki + stride * h_out:stride, kj:kj + stride * w_out:stride] += (
                np.einsum("oc,bohw->bchw", weight[:, :, ki, kj], gb)
            )
    grad_b = gb.sum(axis=(0, 2, 3))
    if padding:
        grad_x = grad_xp[:, :, padding:padding + h, padding:padding + w]
    else:
        grad_x = grad_xp
    return (grad_x[0] if squeeze else grad_x), grad_w, grad_b


def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map: (b, n_in) @ weight.T + bias with weight (n_out, n_in)."""
    return x @ weight.T + bias


def dense_backward(
    x: np.ndarray, weight: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    grad_x = grad_out @ weight
    grad_w = grad_out.T @ x
    grad_b = grad_out.sum(axis=0)
    return grad_x, grad_w, grad_b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def adaptive_avg_pool(x: np.ndarray) -> np.ndarray:
    """Global average pooling to 1x1, flattened: (.., c, h, w) -> (.., c)."""
    if x.ndim not in (3, 4):
        raise ValueError(f"expected (c,h,w) or (b,c,h,w), got shape {x.shape}")
    return x.mean(axis=(-2, -1))


def adaptive_avg_pool_backward(x_shape: tuple[int, ...], grad_out: np.ndarray) -> np.ndarray:
    h, w = x_shape[-2:]
    expanded = np.broadcast_to(grad_out[..., None, None], tuple(grad_out.shape) + (h, w))
    return (expanded / (h * w)).reshape(x_shape)


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Channel-wise concatenation (axis -3)."""
    return np.concatenate([a, b], axis=-3)


def concat_channels_backward(
    grad_out: np.ndarray, channels_a: int
) -> tuple[np.ndarray, np.ndarray]:
    return (
        grad_out[..., :channels_a, :, :],
        grad_out[..., channels_a:, :, :],
    )


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x)
    out = np.empty_like(x, dtype=x.dtype)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)) without overflow."""
    return np.logaddexp(np.zeros_like(x), x)


def uniform_fan_in(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)
