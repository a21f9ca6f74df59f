"""Minimal deterministic neural-network engine for the monitor.

Explicit forward/backward pairs for the handful of layers the cascade needs
(2-D convolution, dense, ReLU, global average pooling, channel concatenation),
an Adam optimizer, the cascaded architecture with its rank-consistent ordinal
head, and the training loop. Everything is plain numpy, seeded, and
bit-reproducible on a fixed platform.
"""

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
)
from .model import (
    CascadeConfig,
    MonitorModel,
    cascade_forward,
    coral_encode,
    coral_loss,
    coral_loss_grad,
    init_params,
    predict,
    rank_probabilities,
    train_monitor,
)
from .optim import AdamState, adam_step
from .io import load_model, save_model

__all__ = [
    "AdamState",
    "CascadeConfig",
    "MonitorModel",
    "adam_step",
    "adaptive_avg_pool",
    "adaptive_avg_pool_backward",
    "cascade_forward",
    "concat_channels",
    "concat_channels_backward",
    "conv2d_backward",
    "conv2d_forward",
    "coral_encode",
    "coral_loss",
    "coral_loss_grad",
    "dense_backward",
    "dense_forward",
    "init_params",
    "load_model",
    "predict",
    "rank_probabilities",
    "relu",
    "relu_backward",
    "save_model",
    "sigmoid",
    "softplus",
    "train_monitor",
]
