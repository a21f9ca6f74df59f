"""Build a tiny detection stream by hand, serialize it, and read it back.

Shows the .dstream container: a JSON header followed by length-prefixed
frame records carrying detections, optional ground truth, and raw float32
backbone tensors. Round-trips are bit-exact.
"""

import numpy as np

from detmon.stream import (
    BBox,
    Detection,
    FrameRecord,
    GroundTruthObject,
    StreamHeader,
    read_all,
    validate,
    write_stream,
)

header = StreamHeader(
    layer_shapes=((4, 8, 8), (8, 4, 4)),
    image_size=(320, 240),
    class_names=("vehicle", "pedestrian"),
    frame_count=3,
)

rng = np.random.default_rng(0)
frames = []
for i in range(3):
    gt = (GroundTruthObject(BBox(40, 40, 120, 100), 0),)
    det = (Detection(BBox(42, 38, 118, 103), 0, 0.91),)
    tensors = tuple(rng.standard_normal(s).astype(np.float32) for s in header.layer_shapes)
    frames.append(FrameRecord(i, det, gt, tensors))

blob = write_stream(header, frames)
print(f"serialized {len(frames)} frames into {len(blob)} bytes")

header2, frames2 = read_all(blob)
print(f"reader returned {len(frames2)} frames, image size {header2.image_size}")
print("bit-exact re-serialization:", write_stream(header2, frames2) == blob)
print(validate(blob))
