"""The two comparison systems the monitor is measured against.

Baseline 1 summarizes each frame's detections into eight hand-crafted
statistics (confidence, pairwise overlap, normalized box size); Baseline 2
globally average-pools the last backbone layer. Either per-frame vector is
concatenated across the window and fed to a small dense binary classifier
that predicts the alert probability directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .mapeval import iou
from .stream import FrameRecord
from .tensornet.io import ModelFileError, read_envelope, write_envelope
from .tensornet.layers import (
    dense_backward,
    dense_forward,
    relu,
    relu_backward,
    sigmoid,
    softplus,
    uniform_fan_in,
)
from .tensornet.optim import AdamState, adam_step

HANDCRAFTED_DIM = 8
KIND_BASELINE = "baseline"


def handcrafted_features(frame: FrameRecord, image_size: tuple[int, int]) -> np.ndarray:
    """Eight detection statistics for one frame; zeros when it has none.

    [mean conf, median conf, mean pairwise IoU, median pairwise IoU,
     mean width, median width, mean height, median height], box dimensions
    normalized by the image size. Overlap terms are 0 with fewer than two
    detections.
    """
    dets = frame.detections
    if not dets:
        return np.zeros(HANDCRAFTED_DIM)
    img_w, img_h = image_size
    confs = np.array([d.confidence for d in dets])
    widths = np.array([d.box.width / img_w for d in dets])
    heights = np.array([d.box.height / img_h for d in dets])
    overlaps = [
        iou(dets[i].box, dets[j].box)
        for i in range(len(dets))
        for j in range(i + 1, len(dets))
    ]
    mean_iou = float(np.mean(overlaps)) if overlaps else 0.0
    median_iou = float(np.median(overlaps)) if overlaps else 0.0
    return np.array(
        [
            confs.mean(), np.median(confs),
            mean_iou, median_iou,
            widths.mean(), np.median(widths),
            heights.mean(), np.median(heights),
        ]
    )


def pooled_last_layer(frame: FrameRecord) -> np.ndarray:
    """Global average pool of the deepest backbone layer: length c_p."""
    if not frame.features:
        raise ValueError(f"frame {frame.frame_id} carries no feature tensors")
    last = frame.features[-1]
    return last.mean(axis=(1, 2), dtype=np.float64)


def window_handcrafted(
    frames: Sequence[FrameRecord], image_size: tuple[int, int]
) -> np.ndarray:
    """Per-frame hand-crafted vectors concatenated in frame order (8w)."""
    return np.concatenate([handcrafted_features(f, image_size) for f in frames])


def window_pooled_last_layer(frames: Sequence[FrameRecord]) -> np.ndarray:
    """Per-frame pooled last layers concatenated in frame order (w * c_p)."""
    return np.concatenate([pooled_last_layer(f) for f in frames])


@dataclass
class BaselineModel:
    """Dense binary alert classifier over per-window feature vectors."""

    feature_kind: str  # "handcrafted" or "pooled_last_layer"
    input_dim: int
    hidden_dims: tuple[int, ...]
    params: dict[str, np.ndarray]
    norm_means: np.ndarray
    norm_stds: np.ndarray
    seed: int
    version: int = 1


def _init_baseline_params(
    input_dim: int, hidden_dims: Sequence[int], rng: np.random.Generator
) -> dict[str, np.ndarray]:
    dims = [input_dim, *hidden_dims]
    params: dict[str, np.ndarray] = {}
    for i, (n_in, n_out) in enumerate(zip(dims, dims[1:])):
        params[f"dense{i}.weight"] = uniform_fan_in((n_out, n_in), n_in, rng).astype(np.float32)
        params[f"dense{i}.bias"] = np.zeros(n_out, dtype=np.float32)
    # Zero output layer: the untrained classifier scores 0.5 everywhere.
    params["out.weight"] = np.zeros((1, dims[-1]), dtype=np.float32)
    params["out.bias"] = np.zeros(1, dtype=np.float32)
    return params


def _baseline_logits(x: np.ndarray, model_params: dict, hidden_dims: Sequence[int]):
    cache = []
    h = x
    for i in range(len(hidden_dims)):
        z = dense_forward(h, model_params[f"dense{i}.weight"], model_params[f"dense{i}.bias"])
        cache.append((h, z))
        h = relu(z)
    logits = dense_forward(h, model_params["out.weight"], model_params["out.bias"])[:, 0]
    return logits, (cache, h)


def train_baseline(
    features: np.ndarray,
    alert_labels: Sequence[bool],
    feature_kind: str,
    seed: int,
    hidden_dims: tuple[int, ...] = (64, 32),
    epochs: int = 40,
    learning_rate: float = 1e-3,
    batch_size: int = 32,
) -> tuple[BaselineModel, list[float]]:
    """Fit the binary alert classifier; deterministic per seed.

    Inputs are standardized per dimension with statistics stored in the
    model. Binary cross-entropy, Adam, partial final batches included.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(alert_labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("features must be (windows, dim) aligned with labels")
    if y.min() == y.max():
        raise ValueError("training labels contain a single class; cannot fit an alert model")

    means = x.mean(axis=0)
    stds = np.maximum(x.std(axis=0), 1e-6)
    xn = ((x - means) / stds).astype(np.float32)
    y32 = y.astype(np.float32)

    rng = np.random.default_rng(seed)
    params = _init_baseline_params(x.shape[1], hidden_dims, rng)
    state = AdamState()
    n = x.shape[0]
    losses = []

    logits, _ = _baseline_logits(xn, params, hidden_dims)
    losses.append(float(np.mean(softplus(logits) - y32 * logits)))

    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xb, yb = xn[idx], y32[idx]
            logits, (cache, h_last) = _baseline_logits(xb, params, hidden_dims)
            loss = float(np.mean(softplus(logits) - yb * logits))
            grad_logit = ((sigmoid(logits) - yb) / len(idx))[:, None]
            grads: dict[str, np.ndarray] = {}
            grad_h, grads["out.weight"], grads["out.bias"] = dense_backward(
                h_last, params["out.weight"], grad_logit
            )
            for i in reversed(range(len(hidden_dims))):
                h_in, z = cache[i]
                grad_z = relu_backward(z, grad_h)
                grad_h, grads[f"dense{i}.weight"], grads[f"dense{i}.bias"] = dense_backward(
                    h_in, params[f"dense{i}.weight"], grad_z
                )
            adam_step(params, grads, state, learning_rate)
            epoch_losses.append(loss)
        losses.append(float(np.mean(epoch_losses)))

    model = BaselineModel(
        feature_kind=feature_kind,
        input_dim=x.shape[1],
        hidden_dims=tuple(hidden_dims),
        params=params,
        norm_means=means,
        norm_stds=stds,
        seed=seed,
    )
    return model, losses


def predict_baseline(features: np.ndarray, model: BaselineModel) -> np.ndarray:
    """Alert probability per window feature vector."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim}-dim features, got {x.shape[1]}")
    xn = ((x - model.norm_means) / model.norm_stds).astype(np.float32)
    logits, _ = _baseline_logits(xn, model.params, model.hidden_dims)
    return sigmoid(logits.astype(np.float64))


def save_baseline(model: BaselineModel, path: Optional[str] = None) -> bytes:
    config_doc = {
        "feature_kind": model.feature_kind,
        "input_dim": model.input_dim,
        "hidden_dims": list(model.hidden_dims),
    }
    data = write_envelope(
        KIND_BASELINE,
        config_doc,
        [float(v) for v in model.norm_means],
        [float(v) for v in model.norm_stds],
        model.seed,
        model.params,
        version=model.version,
    )
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data


def load_baseline(source: Union[bytes, str]) -> BaselineModel:
    header, params = read_envelope(source)
    if header["kind"] != KIND_BASELINE:
        raise ModelFileError(f"expected a baseline model, found kind '{header['kind']}'")
    cfg = header["config"]
    model = BaselineModel(
        feature_kind=cfg["feature_kind"],
        input_dim=int(cfg["input_dim"]),
        hidden_dims=tuple(cfg["hidden_dims"]),
        params=params,
        norm_means=np.asarray(header["norm_stats"]["means"], dtype=np.float64),
        norm_stds=np.asarray(header["norm_stats"]["stds"], dtype=np.float64),
        seed=int(header["seed"]),
        version=int(header["version"]),
    )
    dims = [model.input_dim, *model.hidden_dims]
    for i, (n_in, n_out) in enumerate(zip(dims, dims[1:])):
        if params[f"dense{i}.weight"].shape != (n_out, n_in):
            raise ModelFileError(f"parameter 'dense{i}.weight' has an unexpected shape")
    if params["out.weight"].shape != (1, dims[-1]):
        raise ModelFileError("parameter 'out.weight' has an unexpected shape")
    return model
