import json
import os

import numpy as np
import pytest
from PIL import Image, ImageDraw

CLIP_SIZE = (480, 320)  # original clip resolution (w, h)


def render_clip(root, num_frames=50):
    """Deterministic 50-frame clip: gradient background, two moving boxes."""
    images_dir = os.path.join(root, "clip")
    os.makedirs(images_dir, exist_ok=True)
    w, h = CLIP_SIZE
    gradient = np.linspace(40, 200, w, dtype=np.uint8)
    background = np.tile(gradient, (h, 1))
    annotations = {"images": {}}
    for t in range(num_frames):
        frame = np.stack([background] * 3, axis=-1).copy()
        img = Image.fromarray(frame)
        draw = ImageDraw.Draw(img)
        # a "car" drifting right and a "person" bobbing vertically
        car = (40 + 3 * t, 180, 40 + 3 * t + 140, 180 + 90)
        person = (330, 60 + int(25 * np.sin(t / 5)), 330 + 45, 60 + int(25 * np.sin(t / 5)) + 120)
        draw.rectangle(car, fill=(200, 40, 40))
        draw.rectangle(person, fill=(40, 60, 220))
        name = f"frame_{t:04d}.png"
        img.save(os.path.join(images_dir, name))
        annotations["images"][name] = [
            {"class": "car", "box": list(map(float, car))},
            {"class": "person", "box": list(map(float, person))},
        ]
    ann_path = os.path.join(root, "annotations.json")
    with open(ann_path, "w", encoding="utf-8") as fh:
        json.dump(annotations, fh)
    return images_dir, ann_path


@pytest.fixture(scope="session")
def clip(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("clip_fixture"))
    return render_clip(root)
