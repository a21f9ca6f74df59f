"""Detector-to-stream export pipeline.

Runs a torchvision detection model over an image-sequence folder, captures
the configured backbone activations with forward hooks, and writes one
conformant `.dstream` frame per image (filename order). Ground truth is
attached when an annotation source is given. All images are resized to one
fixed target so the captured tensor shapes stay constant, which the wire
format requires.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import torch
from PIL import Image

from .annotations import AnnotationError, load_annotations, lookup, resolve_class
from .dstream import Frame, Header, Writer

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")

DEFAULT_LAYERS = (
    "backbone.body.layer2",
    "backbone.body.layer3",
    "backbone.body.layer4",
)


class ExportError(Exception):
    pass


@dataclass
class ExportConfig:
    model_name: str = "fasterrcnn_resnet50_fpn"
    weights: Optional[str] = None  # torchvision weights enum name, e.g. "DEFAULT"
    capture_layers: tuple[str, ...] = DEFAULT_LAYERS  # ordered shallow -> deep
    resize: tuple[int, int] = (160, 96)  # (width, height)
    class_names: tuple[str, ...] = ("vehicle", "pedestrian")
    # detector label id -> monitor class name; unmapped detections are dropped
    label_map: Mapping[int, str] = field(default_factory=dict)
    # annotation class name -> monitor class name (merge semantics)
    annotation_class_map: Mapping[str, str] = field(default_factory=dict)
    annotations: Optional[str] = None
    min_score: float = 0.0
    min_box_size: float = 0.0  # filter in resized pixels; 0 disables
    device: str = "cpu"


def build_detector(config: ExportConfig):
    import torchvision.models.detection as detection

    if not hasattr(detection, config.model_name):
        available = [n for n in dir(detection) if n.endswith(("_fpn", "_320_fpn"))]
        raise ExportError(
            f"unknown detection model '{config.model_name}'; available: {available}"
        )
    factory = getattr(detection, config.model_name)
    width, height = config.resize
    kwargs = dict(min_size=min(width, height), max_size=max(width, height))
    if config.weights:
        model = factory(weights=config.weights, **kwargs)
    else:
        model = factory(weights=None, weights_backbone=None, **kwargs)
    model.eval()
    model.to(config.device)
    return model


def attach_hooks(model, layer_names: Sequence[str]) -> dict[str, torch.Tensor]:
    """Register forward hooks; returns the dict the activations land in."""
    modules = dict(model.named_modules())
    missing = [name for name in layer_names if name not in modules]
    if missing:
        candidates = [n for n in modules if "backbone" in n and n.count(".") <= 2 and n]
        raise ExportError(
            f"layer name(s) {missing} not found; available backbone modules "
            f"include: {sorted(candidates)[:20]}"
        )
    captured: dict[str, torch.Tensor] = {}

    def make_hook(name):
        def hook(_module, _inputs, output):
            captured[name] = output.detach()

        return hook

    for name in layer_names:
        modules[name].register_forward_hook(make_hook(name))
    return captured


def list_images(images_dir: str) -> list[str]:
    entries = sorted(
        entry
        for entry in os.listdir(images_dir)
        if entry.lower().endswith(IMAGE_EXTENSIONS)
    )
    if not entries:
        raise ExportError(f"no images found under {images_dir}")
    return entries


def _load_resized(path: str, resize: tuple[int, int]) -> tuple[torch.Tensor, tuple[int, int]]:
    with Image.open(path) as img:
        original = img.size
        resized = img.convert("RGB").resize(resize, Image.BILINEAR)
    array = np.asarray(resized, dtype=np.float32) / 255.0
    return torch.from_numpy(array).permute(2, 0, 1), original


def _scale_box(box, original, resize):
    ox, oy = original
    rx, ry = resize
    x0, y0, x1, y1 = box
    return (x0 * rx / ox, y0 * ry / oy, x1 * rx / ox, y1 * ry / oy)


def _clip_box(box, resize):
    x0, y0, x1, y1 = box
    rx, ry = resize
    return (
        min(max(x0, 0.0), rx),
        min(max(y0, 0.0), ry),
        min(max(x1, 0.0), rx),
        min(max(y1, 0.0), ry),
    )


def export(images_dir: str, out_path: str, config: ExportConfig) -> Header:
    """Run the detector over every image and write the stream; returns its header."""
    images = list_images(images_dir)
    annotations = load_annotations(config.annotations) if config.annotations else None
    model = build_detector(config)
    captured = attach_hooks(model, config.capture_layers)

    width, height = config.resize
    header: Optional[Header] = None
    writer: Optional[Writer] = None
    sink = open(out_path, "wb")
    try:
        with torch.no_grad():
            for frame_id, filename in enumerate(images):
                tensor, original = _load_resized(os.path.join(images_dir, filename), config.resize)
                output = model([tensor.to(config.device)])[0]

                layer_tensors = []
                for name in config.capture_layers:
                    if name not in captured:
                        raise ExportError(f"layer '{name}' produced no activation")
                    layer_tensors.append(
                        captured[name].squeeze(0).cpu().numpy().astype(np.float32)
                    )
                if header is None:
                    header = Header(
                        layer_shapes=tuple(tuple(t.shape) for t in layer_tensors),
                        image_size=(width, height),
                        class_names=config.class_names,
                        frame_count=len(images),
                    )
                    writer = Writer(sink, header)

                detections = []
                boxes = output["boxes"].cpu().numpy()
                labels = output["labels"].cpu().numpy()
                scores = output["scores"].cpu().numpy()
                for box, label, score in zip(boxes, labels, scores):
                    if score < config.min_score:
                        continue
                    name = config.label_map.get(int(label))
                    if name is None:
                        continue
                    try:
                        class_id = config.class_names.index(name)
                    except ValueError:
                        raise ExportError(
                            f"label map target '{name}' is not a configured class"
                        ) from None
                    x0, y0, x1, y1 = _clip_box(tuple(float(v) for v in box), config.resize)
                    if x1 - x0 <= 0 or y1 - y0 <= 0:
                        continue
                    if config.min_box_size and (
                        x1 - x0 < config.min_box_size or y1 - y0 < config.min_box_size
                    ):
                        continue
                    detections.append(
                        (x0, y0, x1, y1, class_id, float(np.clip(score, 0.0, 1.0)))
                    )

                ground_truth = None
                if annotations is not None:
                    objects = lookup(annotations, filename)
                    if objects is None:
                        raise AnnotationError(f"no annotations for image {filename}")
                    ground_truth = []
                    for name, box in objects:
                        class_id = resolve_class(
                            name, config.annotation_class_map, config.class_names
                        )
                        scaled = _clip_box(_scale_box(box, original, config.resize), config.resize)
                        x0, y0, x1, y1 = scaled
                        if x1 - x0 <= 0 or y1 - y0 <= 0:
                            continue
                        if config.min_box_size and (
                            x1 - x0 < config.min_box_size or y1 - y0 < config.min_box_size
                        ):
                            continue
                        ground_truth.append((x0, y0, x1, y1, class_id))
                    ground_truth = tuple(ground_truth)

                writer.write_frame(
                    Frame(frame_id, tuple(detections), ground_truth, tuple(layer_tensors))
                )
    finally:
        sink.close()
    return header
