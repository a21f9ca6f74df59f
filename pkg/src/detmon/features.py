"""Window feature construction: channel-wise average pooling of backbone
tensors, sliding-window stacking, and train-time normalization.

One frame contributes one pooled 2-D map per backbone layer; a window of
``w`` frames stacks those maps along the channel axis, giving the monitor one
``w x h_j x w_j`` tensor per layer. Pooling averages in 64-bit and stores
32-bit for cross-platform determinism.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .stream import FrameRecord

STD_FLOOR = 1e-6


def channel_avg_pool(tensor: np.ndarray) -> np.ndarray:
    """Per-pixel mean across channels: (c, h, w) -> (1, h, w)."""
    if tensor.ndim != 3:
        raise ValueError(f"expected a (c, h, w) tensor, got shape {tensor.shape}")
    pooled = tensor.mean(axis=0, dtype=np.float64, keepdims=True)
    return pooled.astype(np.float32)


@dataclass(frozen=True)
class WindowFeature:
    """The monitor's input: one (window, h_j, w_j) tensor per backbone layer."""

    tensors: tuple[np.ndarray, ...]

    @property
    def num_layers(self) -> int:
        return len(self.tensors)

    @property
    def window_size(self) -> int:
        return self.tensors[0].shape[0]


def pool_frame(frame: FrameRecord) -> list[np.ndarray]:
    """Channel-pool every backbone layer of one frame."""
    return [channel_avg_pool(t) for t in frame.features]


def stack_window(pooled_frames: Sequence[Sequence[np.ndarray]]) -> WindowFeature:
    """Stack per-frame pooled maps channel-wise, frame order preserved.

    ``pooled_frames[k][j]`` is frame k's pooled map for layer j, shaped
    (1, h_j, w_j); the result's layer-j tensor is (len(pooled_frames), h_j, w_j).
    """
    if not pooled_frames:
        raise ValueError("cannot stack an empty window")
    num_layers = len(pooled_frames[0])
    layer_shapes = [m.shape for m in pooled_frames[0]]
    for k, maps in enumerate(pooled_frames):
        if len(maps) != num_layers:
            raise ValueError(f"frame slot {k} has {len(maps)} layers, expected {num_layers}")
        for j, pooled in enumerate(maps):
            if pooled.shape != layer_shapes[j]:
                raise ValueError(
                    f"frame slot {k} layer {j} shape {pooled.shape} != {layer_shapes[j]}"
                )
    tensors = tuple(
        np.concatenate([maps[j] for maps in pooled_frames], axis=0)
        for j in range(num_layers)
    )
    return WindowFeature(tensors)


@dataclass(frozen=True)
class NormStats:
    """Scalar per-layer mean/std fitted on a training set; std floored."""

    means: tuple[float, ...]
    stds: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        object.__setattr__(self, "stds", tuple(max(float(s), STD_FLOOR) for s in self.stds))
        if len(self.means) != len(self.stds):
            raise ValueError("means and stds must have one entry per layer")


def fit_norm_stats(window_features: Iterable[WindowFeature]) -> NormStats:
    """Per-layer scalar mean and standard deviation over a feature set."""
    sums = None
    sq_sums = None
    counts = None
    for wf in window_features:
        if sums is None:
            sums = np.zeros(wf.num_layers)
            sq_sums = np.zeros(wf.num_layers)
            counts = np.zeros(wf.num_layers)
        for j, tensor in enumerate(wf.tensors):
            x = tensor.astype(np.float64)
            sums[j] += x.sum()
            sq_sums[j] += (x * x).sum()
            counts[j] += x.size
    if sums is None:
        raise ValueError("cannot fit normalization statistics on an empty set")
    means = sums / counts
    variances = np.maximum(sq_sums / counts - means**2, 0.0)
    return NormStats(tuple(means), tuple(np.sqrt(variances)))


def normalize(wf: WindowFeature, stats: NormStats) -> WindowFeature:
    """Per-layer z-scoring: (x - mean) / std."""
    if len(stats.means) != wf.num_layers:
        raise ValueError(
            f"stats cover {len(stats.means)} layers, feature has {wf.num_layers}"
        )
    tensors = tuple(
        ((t - m) / s).astype(np.float32)
        for t, m, s in zip(wf.tensors, stats.means, stats.stds)
    )
    return WindowFeature(tensors)


def denormalize(wf: WindowFeature, stats: NormStats) -> WindowFeature:
    """Inverse of :func:`normalize` given the same stats."""
    tensors = tuple(
        (t * s + m).astype(np.float32)
        for t, m, s in zip(wf.tensors, stats.means, stats.stds)
    )
    return WindowFeature(tensors)


def window_features(
    frames: Iterable[FrameRecord], window_size: int, stride: int = 1
) -> Iterator[tuple[int, WindowFeature]]:
    """Slide over a frame stream yielding (start_frame_id, WindowFeature).

    Each frame is pooled exactly once; sliding by one frame drops the oldest
    pooled slice and appends the newest.
    """
    if window_size < 1:
        raise ValueError("window size must be >= 1")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    buffer: list[tuple[int, list[np.ndarray]]] = []
    seen = 0
    for frame in frames:
        buffer.append((frame.frame_id, pool_frame(frame)))
        seen += 1
        if len(buffer) > window_size:
            buffer.pop(0)
        if len(buffer) == window_size and (seen - window_size) % stride == 0:
            yield buffer[0][0], stack_window([maps for _, maps in buffer])
