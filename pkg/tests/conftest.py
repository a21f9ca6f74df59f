import numpy as np
import pytest

from detmon.stream import BBox, Detection, FrameRecord, GroundTruthObject, StreamHeader


@pytest.fixture
def small_header():
    return StreamHeader(
        layer_shapes=((2, 4, 4), (3, 2, 2)),
        image_size=(100, 80),
        class_names=("vehicle", "pedestrian"),
        frame_count=None,
    )


def make_frame(frame_id, header, rng, with_gt=True, n_det=2, n_gt=2):
    img_w, img_h = header.image_size
    num_classes = len(header.class_names)

    def random_box():
        x0 = rng.uniform(0, img_w - 2)
        y0 = rng.uniform(0, img_h - 2)
        return BBox(x0, y0, x0 + rng.uniform(1, img_w - x0), y0 + rng.uniform(1, img_h - y0))

    dets = tuple(
        Detection(random_box(), int(rng.integers(num_classes)), float(rng.uniform()))
        for _ in range(n_det)
    )
    gt = None
    if with_gt:
        gt = tuple(
            GroundTruthObject(random_box(), int(rng.integers(num_classes)))
            for _ in range(n_gt)
        )
    features = tuple(
        rng.standard_normal(shape).astype(np.float32) for shape in header.layer_shapes
    )
    return FrameRecord(frame_id, dets, gt, features)


@pytest.fixture
def random_frames(small_header):
    rng = np.random.default_rng(7)
    return [make_frame(i, small_header, rng) for i in range(3)]
