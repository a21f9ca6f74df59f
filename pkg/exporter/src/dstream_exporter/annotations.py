"""Ground-truth ingestion from common annotation layouts.

Two layouts are supported, selected by the annotation path:

* a JSON index file::

      {"images": {"frame_0000.png": [
          {"class": "car", "box": [x_min, y_min, x_max, y_max]}, ...], ...}}

* a directory of per-image text files (``<image stem>.txt``), one object per
  line: ``class_name x_min y_min x_max y_max``.

Boxes are in original image pixels; the exporter rescales them to the resize
target. Class names pass through the configured merge map and must land in
the monitor's class list.
"""

from __future__ import annotations

import json
import os
from typing import Mapping, Optional, Sequence


class AnnotationError(Exception):
    pass


def _parse_text_file(path: str) -> list[tuple[str, tuple[float, float, float, float]]]:
    objects = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise AnnotationError(
                    f"{path}:{lineno}: expected 'class x0 y0 x1 y1', got {raw.strip()!r}"
                )
            name = parts[0]
            x0, y0, x1, y1 = (float(v) for v in parts[1:])
            objects.append((name, (x0, y0, x1, y1)))
    return objects


def load_annotations(path: str) -> dict[str, list[tuple[str, tuple[float, float, float, float]]]]:
    """Image filename -> list of (class name, box) in original pixels."""
    if os.path.isdir(path):
        index = {}
        for entry in sorted(os.listdir(path)):
            if not entry.endswith(".txt"):
                continue
            index[os.path.splitext(entry)[0]] = _parse_text_file(os.path.join(path, entry))
        return index
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if "images" not in doc:
        raise AnnotationError(f"{path}: JSON index must carry an 'images' mapping")
    index = {}
    for image_name, objects in doc["images"].items():
        parsed = []
        for obj in objects:
            try:
                parsed.append((obj["class"], tuple(float(v) for v in obj["box"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise AnnotationError(
                    f"{path}: bad object entry for {image_name}: {obj!r}"
                ) from exc
        index[image_name] = parsed
    return index


def lookup(
    index: Mapping[str, list],
    image_filename: str,
) -> Optional[list]:
    """Annotations for one image, matched by filename or stem."""
    if image_filename in index:
        return index[image_filename]
    stem = os.path.splitext(image_filename)[0]
    return index.get(stem)


def resolve_class(
    name: str,
    merge_map: Mapping[str, str],
    class_names: Sequence[str],
) -> int:
    """Class index after merging; unknown targets are an error."""
    target = merge_map.get(name, name)
    try:
        return class_names.index(target)
    except ValueError:
        raise AnnotationError(
            f"annotation class '{name}' maps to '{target}' which is not one of "
            f"{list(class_names)}"
        ) from None
