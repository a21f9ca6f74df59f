"""Deterministic synthetic deployment streams with correlated degradation.

A hidden per-frame difficulty value follows a bounded mean-reverting random
walk. It drives, through configurable gains, the detector's failure modes
(missed objects, localization jitter, spurious detections, confidence decay)
and the amount of structured noise injected into the backbone feature
tensors. Features therefore carry a recoverable difficulty signal, and
per-window mAP drops as difficulty rises, so the full train/evaluate loop
runs at desk scale without any real dataset.

Randomness is split into independent named streams (walk, layout, miss,
jitter, confidence, spurious, features), so changing one gain leaves every
other draw untouched: paired runs let degradation monotonicity be tested
with common random numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from .stream import (
    BBox,
    Detection,
    FrameRecord,
    GroundTruthObject,
    StreamHeader,
    write_stream,
)

# Detector confidence model: base level minus a difficulty-driven slope, with
# shared per-frame wobble plus per-object noise. The wobble keeps window-mean
# confidence a noisy difficulty estimate, so the detection-statistics
# baseline has signal without rivalling the feature path. Spurious detections
# mimic the true-positive confidence level (slightly lower, wider spread) so
# confidence statistics alone cannot flag them.
CONF_BASE = 0.85
CONF_SLOPE = 0.08
CONF_FRAME_NOISE = 0.18
CONF_OBJECT_NOISE = 0.10
SPURIOUS_CONF_DROP = 0.05
SPURIOUS_CONF_NOISE = 0.15

# Feature noise mix (all scaled by feature_noise_gain * difficulty): a
# channel-shared spatial field carries the monitor's signal, a per-frame
# global shift leaks a weaker signal into globally pooled views, and a
# centered iid component adds texture without shifting any channel mean.
NOISE_SPATIAL = 1.0
NOISE_GLOBAL_SHIFT = 0.12
NOISE_IID = 0.30

MIN_DETECTION_EDGE = 2.0  # jittered boxes thinner than this are dropped


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    frame_count: int = 1000
    image_size: tuple[int, int] = (640, 384)
    class_names: tuple[str, ...] = ("vehicle", "pedestrian")
    class_probs: tuple[float, ...] = (0.65, 0.35)
    min_objects: int = 2
    mean_extra_objects: float = 4.0
    walk_step: float = 0.07
    walk_reversion: float = 0.03
    miss_gain: float = 0.8
    localization_gain: float = 0.5
    spurious_gain: float = 0.6
    feature_noise_gain: float = 1.6
    layer_shapes: tuple[tuple[int, int, int], ...] = (
        (8, 28, 28),
        (16, 14, 14),
        (32, 7, 7),
    )

    def __post_init__(self):
        if len(self.class_probs) != len(self.class_names):
            raise ValueError("class_probs must match class_names")
        for gain in (self.miss_gain, self.localization_gain,
                     self.spurious_gain, self.feature_noise_gain):
            if gain < 0:
                raise ValueError("degradation gains must be >= 0")
        if self.frame_count < 0:
            raise ValueError("frame_count must be >= 0")

    def header(self) -> StreamHeader:
        return StreamHeader(
            layer_shapes=self.layer_shapes,
            image_size=self.image_size,
            class_names=self.class_names,
            frame_count=self.frame_count,
        )


def _rng_streams(seed: int) -> dict[str, np.random.Generator]:
    root = np.random.SeedSequence(seed)
    names = ("walk", "layout", "miss", "jitter", "confidence", "spurious", "features")
    children = root.spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


def difficulty_walk(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Bounded mean-reverting random walk on [0, 1]."""
    d = np.empty(config.frame_count)
    if config.frame_count == 0:
        return d
    value = rng.uniform(0.15, 0.85)
    for t in range(config.frame_count):
        d[t] = value
        drift = config.walk_reversion * (0.5 - value)
        value = float(np.clip(value + drift + config.walk_step * rng.standard_normal(), 0.0, 1.0))
    return d


def _sample_box(cls: int, config: SynthConfig, rng: np.random.Generator) -> BBox:
    # Vehicles run wide, pedestrians tall; everything clears 30 px.
    img_w, img_h = config.image_size
    if cls == 0:
        width = float(np.exp(rng.uniform(np.log(40), np.log(170))))
        height = width * rng.uniform(0.55, 0.85)
    else:
        height = float(np.exp(rng.uniform(np.log(40), np.log(150))))
        width = height * rng.uniform(0.35, 0.55)
    width = min(width, img_w - 1)
    height = min(height, img_h - 1)
    x0 = rng.uniform(0, img_w - width)
    y0 = rng.uniform(0, img_h - height)
    return BBox(x0, y0, x0 + width, y0 + height)


def _sample_objects(config: SynthConfig, rng: np.random.Generator):
    count = config.min_objects + rng.poisson(config.mean_extra_objects)
    objects = []
    for _ in range(count):
        cls = int(rng.choice(len(config.class_names), p=config.class_probs))
        objects.append(GroundTruthObject(_sample_box(cls, config, rng), cls))
    return objects


def _detect_objects(
    objects, difficulty, config: SynthConfig, rngs
) -> list[Detection]:
    img_w, img_h = config.image_size
    miss_p = min(config.miss_gain * difficulty, 0.95)
    frame_conf_offset = rngs["confidence"].standard_normal() * CONF_FRAME_NOISE
    detections = []
    for obj in objects:
        # Draws are consumed for every object, kept or not, so runs with
        # different gains stay aligned draw-for-draw.
        missed = rngs["miss"].uniform() < miss_p
        jit = rngs["jitter"].standard_normal(4)
        conf_noise = rngs["confidence"].standard_normal() * CONF_OBJECT_NOISE
        if missed:
            continue
        box = obj.box
        sx = config.localization_gain * difficulty * 0.25 * box.width
        sy = config.localization_gain * difficulty * 0.25 * box.height
        x0 = np.clip(box.x_min + jit[0] * sx, 0, img_w)
        y0 = np.clip(box.y_min + jit[1] * sy, 0, img_h)
        x1 = np.clip(box.x_max + jit[2] * sx, 0, img_w)
        y1 = np.clip(box.y_max + jit[3] * sy, 0, img_h)
        if x1 - x0 < MIN_DETECTION_EDGE or y1 - y0 < MIN_DETECTION_EDGE:
            continue
        conf = float(
            np.clip(
                CONF_BASE - CONF_SLOPE * difficulty + frame_conf_offset + conf_noise,
                0.01,
                0.999,
            )
        )
        detections.append(Detection(BBox(float(x0), float(y0), float(x1), float(y1)),
                                    obj.class_id, conf))
    # Spurious detections at a rate proportional to difficulty; their boxes
    # and confidences follow the true-positive distributions so summary
    # statistics of the detections barely betray them.
    rate = config.spurious_gain * difficulty * (config.min_objects + config.mean_extra_objects)
    spurious_rng = rngs["spurious"]
    for _ in range(spurious_rng.poisson(rate)):
        cls = int(spurious_rng.integers(len(config.class_names)))
        box = _sample_box(cls, config, spurious_rng)
        conf = float(
            np.clip(
                CONF_BASE
                - CONF_SLOPE * difficulty
                + frame_conf_offset
                - SPURIOUS_CONF_DROP
                + spurious_rng.standard_normal() * SPURIOUS_CONF_NOISE,
                0.01,
                0.999,
            )
        )
        detections.append(Detection(box, cls, conf))
    return detections


class _FeaturePainter:
    """Renders smooth class/layout-driven base maps plus difficulty noise."""

    def __init__(self, config: SynthConfig):
        self.config = config
        self.grids = []
        self.backgrounds = []
        self.channel_scales = []
        self.channel_biases = []
        for j, (c, h, w) in enumerate(config.layer_shapes):
            ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
            self.grids.append((ys, xs))
            background = 0.3 * np.sin(2 * np.pi * xs / w + 1.7 * j) + 0.3 * np.cos(
                2 * np.pi * ys / h - 0.9 * j
            )
            self.backgrounds.append(background)
            channels = np.arange(c)
            self.channel_scales.append((0.6 + 0.8 * channels / max(c - 1, 1))[:, None, None])
            self.channel_biases.append((0.15 * np.sin(1.3 * channels))[:, None, None])

    def paint(self, objects, difficulty: float, rng: np.random.Generator):
        img_w, img_h = self.config.image_size
        gain = self.config.feature_noise_gain
        tensors = []
        for j, (c, h, w) in enumerate(self.config.layer_shapes):
            ys, xs = self.grids[j]
            base = self.backgrounds[j].copy()
            for obj in objects:
                box = obj.box
                gx = (box.x_min + box.x_max) / 2 / img_w * w
                gy = (box.y_min + box.y_max) / 2 / img_h * h
                sx = max(0.7, box.width / img_w * w * 0.5)
                sy = max(0.7, box.height / img_h * h * 0.5)
                amp = 1.0 if obj.class_id == 0 else 0.7
                base += amp * np.exp(
                    -(((xs - gx) / sx) ** 2 + ((ys - gy) / sy) ** 2) / 2
                )
            # Channel-shared spatial noise, centered so only spatial texture
            # carries the signal and per-channel means stay clean.
            spatial = rng.standard_normal((h, w))
            spatial -= spatial.mean()
            shift = rng.standard_normal() * NOISE_GLOBAL_SHIFT * gain * difficulty
            iid = rng.standard_normal((c, h, w))
            iid -= iid.mean(axis=(1, 2), keepdims=True)
            tensor = (
                self.channel_scales[j] * base
                + self.channel_biases[j]
                + NOISE_SPATIAL * gain * difficulty * spatial
                + shift
                + NOISE_IID * gain * difficulty * iid
            )
            tensors.append(tensor.astype(np.float32))
        return tuple(tensors)


def generate_frames(config: SynthConfig) -> tuple[Iterator[FrameRecord], np.ndarray]:
    """Frame iterator plus the hidden difficulty series behind it."""
    rngs = _rng_streams(config.seed)
    difficulties = difficulty_walk(config, rngs["walk"])
    painter = _FeaturePainter(config)

    def frames():
        for t in range(config.frame_count):
            d = float(difficulties[t])
            objects = _sample_objects(config, rngs["layout"])
            detections = _detect_objects(objects, d, config, rngs)
            tensors = painter.paint(objects, d, rngs["features"])
            yield FrameRecord(t, tuple(detections), tuple(objects), tensors)

    return frames(), difficulties


def generate_stream(config: SynthConfig) -> tuple[bytes, np.ndarray]:
    """Serialize a synthetic stream; identical configs give identical bytes."""
    frames, difficulties = generate_frames(config)
    return write_stream(config.header(), frames), difficulties


def make_split(
    config: SynthConfig, train_seed: int, test_seed: int
) -> tuple[bytes, bytes]:
    """Two disjoint-seed streams sharing one configuration."""
    if train_seed == test_seed:
        raise ValueError("train and test seeds must differ")
    train_bytes, _ = generate_stream(replace(config, seed=train_seed))
    test_bytes, _ = generate_stream(replace(config, seed=test_seed))
    return train_bytes, test_bytes


def difficulty_to_csv(difficulties: np.ndarray) -> str:
    """Side-file format for the hidden difficulty series (diagnostics only)."""
    lines = ["frame_id,difficulty"]
    lines += [f"{i},{d:.6f}" for i, d in enumerate(difficulties)]
    return "\n".join(lines) + "\n"
