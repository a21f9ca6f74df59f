"""The cascaded monitor network and its ordinal training loop.

Architecture, for backbone layers j = 1..p with window features F_j of shape
(window, h_j, w_j):

    A_1 = F_1
    A_{j+1} = ReLU(f_j(A_j)) ++ F_{j+1}        (++ = channel concatenation)

Each filter f_j is a 3x3 convolution, padded 1, whose stride is the spatial
ratio h_j / h_{j+1}, so its output aligns with the next layer's grid. The
final accumulated map is globally average-pooled to a vector, passed through
dense ReLU layers, and scored by an ordinal head with a shared weight vector
and ordered biases:

    logit_k = w . h + b_k,   b_1 >= b_2 >= ... >= b_{C-1}

The biases are parameterized as b_1 minus cumulative clamped-non-negative
offsets, so the rank probabilities sigmoid(logit_k) are non-increasing in k
for every parameter setting, not only at the optimum; training projects the
offsets back onto >= 0 after every optimizer step so their gradient stays
live. A "pairwise" switch applies each filter to the raw F_j instead of the
accumulated map, for ablation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..features import NormStats, WindowFeature, fit_norm_stats, normalize
from .layers import (
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
    uniform_fan_in,
)
from .optim import AdamState, adam_step

ACCUMULATED = "accumulated"
PAIRWISE = "pairwise"


@dataclass(frozen=True)
class CascadeConfig:
    window_size: int
    layer_shapes: tuple[tuple[int, int, int], ...]
    filter_out_channels: Optional[int] = None
    kernel_size: int = 3
    hidden_dims: tuple[int, ...] = (64,)
    num_classes: int = 5
    cascade_mode: str = ACCUMULATED

    def __post_init__(self):
        object.__setattr__(
            self, "layer_shapes", tuple(tuple(int(d) for d in s) for s in self.layer_shapes)
        )
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        if self.filter_out_channels is None:
            object.__setattr__(self, "filter_out_channels", self.window_size)
        if self.window_size < 1:
            raise ValueError("window size must be >= 1")
        if self.num_classes < 2:
            raise ValueError("need at least two ordinal classes")
        if self.cascade_mode not in (ACCUMULATED, PAIRWISE):
            raise ValueError(f"unknown cascade mode {self.cascade_mode!r}")
        self.strides()  # validates spatial ratios

    @property
    def num_layers(self) -> int:
        return len(self.layer_shapes)

    def spatial_dims(self) -> list[tuple[int, int]]:
        return [(h, w) for _, h, w in self.layer_shapes]

    def strides(self) -> list[int]:
        """Per-filter stride: the spatial ratio between consecutive layers."""
        dims = self.spatial_dims()
        strides = []
        for (h0, w0), (h1, w1) in zip(dims, dims[1:]):
            if h0 % h1 or w0 % w1 or h0 // h1 != w0 // w1:
                raise ValueError(
                    f"layer grids {h0}x{w0} -> {h1}x{w1} are not an integer ratio"
                )
            strides.append(h0 // h1)
        return strides

    def filter_in_channels(self, j: int) -> int:
        if j == 0 or self.cascade_mode == PAIRWISE:
            return self.window_size
        return self.filter_out_channels + self.window_size

    def pooled_length(self) -> int:
        if self.num_layers == 1:
            return self.window_size
        return self.filter_out_channels + self.window_size

    def head_dims(self) -> list[int]:
        return [self.pooled_length(), *self.hidden_dims]


def expected_param_shapes(config: CascadeConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    k = config.kernel_size
    for j in range(config.num_layers - 1):
        shapes[f"filter{j}.weight"] = (
            config.filter_out_channels, config.filter_in_channels(j), k, k
        )
        shapes[f"filter{j}.bias"] = (config.filter_out_channels,)
    dims = config.head_dims()
    for i, (n_in, n_out) in enumerate(zip(dims, dims[1:])):
        shapes[f"dense{i}.weight"] = (n_out, n_in)
        shapes[f"dense{i}.bias"] = (n_out,)
    shapes["coral.weight"] = (dims[-1],)
    shapes["coral.bias1"] = ()
    shapes["coral.delta"] = (config.num_classes - 2,)
    return shapes


def init_params(
    config: CascadeConfig, rng: np.random.Generator, dtype=np.float32
) -> dict[str, np.ndarray]:
    """Uniform fan-in filters and dense layers; zero ordinal head.

    The zero head makes every initial logit exactly 0, so the first recorded
    loss sits at ln 2 regardless of the data.
    """
    k = config.kernel_size
    params: dict[str, np.ndarray] = {}
    for j in range(config.num_layers - 1):
        c_in = config.filter_in_channels(j)
        params[f"filter{j}.weight"] = uniform_fan_in(
            (config.filter_out_channels, c_in, k, k), c_in * k * k, rng
        ).astype(dtype)
        params[f"filter{j}.bias"] = np.zeros(config.filter_out_channels, dtype=dtype)
    dims = config.head_dims()
    for i, (n_in, n_out) in enumerate(zip(dims, dims[1:])):
        params[f"dense{i}.weight"] = uniform_fan_in((n_out, n_in), n_in, rng).astype(dtype)
        params[f"dense{i}.bias"] = np.zeros(n_out, dtype=dtype)
    params["coral.weight"] = np.zeros(dims[-1], dtype=dtype)
    params["coral.bias1"] = np.zeros((), dtype=dtype)
    params["coral.delta"] = np.zeros(config.num_classes - 2, dtype=dtype)
    return params


def ordered_biases(params: dict[str, np.ndarray]) -> np.ndarray:
    """b_1 minus cumulative clamped offsets: non-increasing for any params."""
    b1 = params["coral.bias1"]
    offsets = np.maximum(params["coral.delta"], 0)
    return np.concatenate(([b1], b1 - np.cumsum(offsets)))


def _check_input(tensors: Sequence[np.ndarray], config: CascadeConfig) -> None:
    if len(tensors) != config.num_layers:
        raise ValueError(f"expected {config.num_layers} layer tensors, got {len(tensors)}")
    for j, (t, (h, w)) in enumerate(zip(tensors, config.spatial_dims())):
        if t.shape[-3:] != (config.window_size, h, w):
            raise ValueError(
                f"layer {j}: expected (.., {config.window_size}, {h}, {w}), got {t.shape}"
            )


def _forward(
    tensors: Sequence[np.ndarray], params: dict[str, np.ndarray], config: CascadeConfig
):
    """Batched forward pass. tensors[j] is (b, window, h_j, w_j)."""
    strides = config.strides()
    pad = config.kernel_size // 2
    cascade_cache = []
    acc = tensors[0]
    for j in range(config.num_layers - 1):
        source = tensors[j] if config.cascade_mode == PAIRWISE else acc
        z = conv2d_forward(
            source, params[f"filter{j}.weight"], params[f"filter{j}.bias"],
            stride=strides[j], padding=pad,
        )
        a = relu(z)
        cascade_cache.append((source, z, a.shape[-3]))
        acc = concat_channels(a, tensors[j + 1])
    pooled = adaptive_avg_pool(acc)
    head_cache = []
    h = pooled
    num_hidden = len(config.hidden_dims)
    for i in range(num_hidden):
        z = dense_forward(h, params[f"dense{i}.weight"], params[f"dense{i}.bias"])
        head_cache.append((h, z))
        h = relu(z)
    score = h @ params["coral.weight"]
    logits = score[:, None] + ordered_biases(params)[None, :]
    cache = (tensors, cascade_cache, acc.shape, head_cache, h)
    return logits, cache


def _backward(
    grad_logits: np.ndarray,
    cache,
    params: dict[str, np.ndarray],
    config: CascadeConfig,
) -> dict[str, np.ndarray]:
    tensors, cascade_cache, acc_shape, head_cache, h_final = cache
    strides = config.strides()
    pad = config.kernel_size // 2
    grads: dict[str, np.ndarray] = {}

    grad_score = grad_logits.sum(axis=1)
    grad_bias_vec = grad_logits.sum(axis=0)
    grads["coral.bias1"] = np.asarray(grad_bias_vec.sum(), dtype=params["coral.bias1"].dtype)
    # Bias at index i >= d+1 subtracts offset d; the clamp blocks the gradient
    # where a (hand-set) offset is negative. Training keeps offsets >= 0.
    suffix = np.cumsum(grad_bias_vec[::-1])[::-1]
    grads["coral.delta"] = -suffix[1:] * (params["coral.delta"] >= 0)
    grads["coral.weight"] = grad_score @ h_final
    grad_h = np.outer(grad_score, params["coral.weight"])

    for i in reversed(range(len(config.hidden_dims))):
        h_in, z = head_cache[i]
        grad_z = relu_backward(z, grad_h)
        grad_h, grad_w, grad_b = dense_backward(h_in, params[f"dense{i}.weight"], grad_z)
        grads[f"dense{i}.weight"] = grad_w
        grads[f"dense{i}.bias"] = grad_b

    grad_acc = adaptive_avg_pool_backward(acc_shape, grad_h)
    for j in reversed(range(config.num_layers - 1)):
        source, z, a_channels = cascade_cache[j]
        grad_a, _ = concat_channels_backward(grad_acc, a_channels)
        grad_z = relu_backward(z, grad_a)
        grad_source, grad_w, grad_b = conv2d_backward(
            source, params[f"filter{j}.weight"], grad_z, stride=strides[j], padding=pad
        )
        grads[f"filter{j}.weight"] = grad_w
        grads[f"filter{j}.bias"] = grad_b
        grad_acc = grad_source  # pairwise mode never reads this further
    return grads


@dataclass
class MonitorModel:
    """Trained monitor: cascade parameters, ordinal head, and input scaling."""

    config: CascadeConfig
    params: dict[str, np.ndarray]
    norm_stats: NormStats
    seed: int
    version: int = 1

    def biases(self) -> np.ndarray:
        return ordered_biases(self.params)


def cascade_forward(wf: WindowFeature, model: MonitorModel) -> np.ndarray:
    """Ordinal logits (length C-1) for one already-normalized window feature.

    :func:`predict` is the end-user path; it applies the model's stored
    normalization before calling this.
    """
    _check_input(wf.tensors, model.config)
    batched = [t[None].astype(np.float64) for t in wf.tensors]
    logits, _ = _forward(batched, model.params, model.config)
    return logits[0]


def rank_probabilities(wf: WindowFeature, model: MonitorModel) -> np.ndarray:
    """P(class >= k) for k = 1..C-1, after normalization; non-increasing."""
    logits = cascade_forward(normalize(wf, model.norm_stats), model)
    return sigmoid(logits)


def class_from_rank_probs(probs: np.ndarray, decision_threshold: float) -> int:
    """Count rule: the class is how many rank probabilities exceed the threshold."""
    return int(np.sum(np.asarray(probs) > decision_threshold))


def predict(
    wf: WindowFeature, model: MonitorModel, decision_threshold: float = 0.5
) -> tuple[int, np.ndarray]:
    """Ordinal class and rank probabilities at a decision threshold.

    The count rule is consistent because the probabilities are ordered;
    the returned class is non-increasing in the threshold.
    """
    if not 0.0 <= decision_threshold <= 1.0:
        raise ValueError("decision threshold must lie in [0, 1]")
    probs = rank_probabilities(wf, model)
    return class_from_rank_probs(probs, decision_threshold), probs


def coral_encode(label: int, num_classes: int) -> np.ndarray:
    """Rank-threshold encoding: first `label` entries 1, remainder 0."""
    if not 0 <= label < num_classes:
        raise ValueError(f"label {label} outside 0..{num_classes - 1}")
    return (np.arange(num_classes - 1) < label).astype(np.float64)


def coral_loss(logits: np.ndarray, encoded_label: np.ndarray) -> float:
    """Mean binary cross-entropy between sigmoid(logit_k) and encoded bit k.

    Computed as softplus(z) - y z, which is exact and finite everywhere.
    """
    logits = np.asarray(logits, dtype=np.float64)
    encoded = np.asarray(encoded_label, dtype=np.float64)
    if logits.shape != encoded.shape:
        raise ValueError(f"{logits.shape} logits vs {encoded.shape} encoded label")
    return float(np.mean(softplus(logits) - encoded * logits))


def coral_loss_grad(logits: np.ndarray, encoded_label: np.ndarray) -> np.ndarray:
    """d coral_loss / d logits."""
    logits = np.asarray(logits, dtype=np.float64)
    encoded = np.asarray(encoded_label, dtype=np.float64)
    return (sigmoid(logits) - encoded) / logits.shape[-1]


def train_monitor(
    dataset: Sequence[tuple[WindowFeature, int]],
    config: CascadeConfig,
    seed: int,
    epochs: int = 40,
    learning_rate: float = 1e-3,
    batch_size: int = 32,
) -> tuple[MonitorModel, list[float]]:
    """Fit the monitor on (WindowFeature, ordinal label) pairs.

    Normalization statistics are fitted on the training set first; the loss
    trace starts with the pre-training loss (index 0), followed by the mean
    batch loss of each epoch. Deterministic for a fixed seed.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    for _, label in dataset:
        if label is None:
            raise ValueError("training labels must be defined ordinal classes")

    stats = fit_norm_stats(wf for wf, _ in dataset)
    num_layers = config.num_layers
    stacked = [
        np.stack([normalize(wf, stats).tensors[j] for wf, _ in dataset]).astype(np.float32)
        for j in range(num_layers)
    ]
    labels = np.array([label for _, label in dataset], dtype=np.int64)
    encoded = np.stack([coral_encode(int(y), config.num_classes) for y in labels]).astype(
        np.float32
    )

    rng = np.random.default_rng(seed)
    params = init_params(config, rng, dtype=np.float32)
    state = AdamState()
    n = len(dataset)
    k = config.num_classes - 1

    def batch_loss_and_grads(idx: np.ndarray):
        tensors = [layer[idx] for layer in stacked]
        logits, cache = _forward(tensors, params, config)
        y = encoded[idx]
        loss = float(np.mean(softplus(logits) - y * logits))
        grad_logits = (sigmoid(logits) - y) / (logits.shape[0] * k)
        grads = _backward(grad_logits.astype(np.float32), cache, params, config)
        return loss, grads

    losses = []
    initial_logits, _ = _forward(stacked, params, config)
    losses.append(float(np.mean(softplus(initial_logits) - encoded * initial_logits)))

    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            loss, grads = batch_loss_and_grads(idx)
            adam_step(params, grads, state, learning_rate)
            np.maximum(params["coral.delta"], 0, out=params["coral.delta"])
            epoch_losses.append(loss)
        losses.append(float(np.mean(epoch_losses)))

    return MonitorModel(config, params, stats, seed), losses
