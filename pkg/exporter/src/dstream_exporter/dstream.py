"""Standalone writer/reader for the `.dstream` monitoring container.

Implements the published wire format directly so this package stays
independent of the monitor's own code: little-endian throughout, magic
``DETMON01``, a uint32-length-prefixed JSON header, then one
int64-length-prefixed record per frame (frame id, detection count,
ground-truth count with -1 meaning absent, float64 detection and
ground-truth tables, raw row-major float32 tensor blobs per layer).

The header JSON is emitted in the canonical key order (version, num_layers,
layer_shapes, image_size, class_names, frame_count) with compact separators,
so files re-serialized by the monitor come back byte-identical.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator, Optional, Union

import numpy as np

MAGIC = b"DETMON01"
_U32 = struct.Struct("<I")
_I64 = struct.Struct("<q")
_DET = struct.Struct("<4dqd")
_GT = struct.Struct("<4dq")


class DStreamError(Exception):
    pass


@dataclass(frozen=True)
class Header:
    layer_shapes: tuple[tuple[int, int, int], ...]
    image_size: tuple[int, int]
    class_names: tuple[str, ...]
    frame_count: Optional[int] = None
    version: int = 1

    def to_json(self) -> bytes:
        doc = {
            "version": self.version,
            "num_layers": len(self.layer_shapes),
            "layer_shapes": [list(s) for s in self.layer_shapes],
            "image_size": list(self.image_size),
            "class_names": list(self.class_names),
            "frame_count": self.frame_count,
        }
        return json.dumps(doc, separators=(",", ":")).encode("utf-8")

    @staticmethod
    def from_json(payload: bytes) -> "Header":
        doc = json.loads(payload.decode("utf-8"))
        return Header(
            layer_shapes=tuple(tuple(s) for s in doc["layer_shapes"]),
            image_size=tuple(doc["image_size"]),
            class_names=tuple(doc["class_names"]),
            frame_count=doc["frame_count"],
            version=int(doc["version"]),
        )


@dataclass(frozen=True)
class Frame:
    frame_id: int
    detections: tuple[tuple[float, float, float, float, int, float], ...]
    ground_truth: Optional[tuple[tuple[float, float, float, float, int], ...]]
    tensors: tuple[np.ndarray, ...]


class Writer:
    """Streams frames to a binary sink; enforces constant tensor shapes."""

    def __init__(self, sink: BinaryIO, header: Header):
        self.sink = sink
        self.header = header
        self.frames_written = 0
        self._last_id: Optional[int] = None
        sink.write(MAGIC)
        payload = header.to_json()
        sink.write(_U32.pack(len(payload)))
        sink.write(payload)

    def write_frame(self, frame: Frame) -> None:
        if self._last_id is not None and frame.frame_id <= self._last_id:
            raise DStreamError(
                f"frame ids must increase: {frame.frame_id} after {self._last_id}"
            )
        self._last_id = frame.frame_id
        if len(frame.tensors) != len(self.header.layer_shapes):
            raise DStreamError(
                f"frame {frame.frame_id}: {len(frame.tensors)} tensors for "
                f"{len(self.header.layer_shapes)} declared layers"
            )
        parts = [
            _I64.pack(frame.frame_id),
            _I64.pack(len(frame.detections)),
            _I64.pack(-1 if frame.ground_truth is None else len(frame.ground_truth)),
        ]
        for det in frame.detections:
            parts.append(_DET.pack(*det))
        if frame.ground_truth is not None:
            for gt in frame.ground_truth:
                parts.append(_GT.pack(*gt))
        for j, (tensor, shape) in enumerate(zip(frame.tensors, self.header.layer_shapes)):
            arr = np.asarray(tensor, dtype="<f4")
            if tuple(arr.shape) != tuple(shape):
                raise DStreamError(
                    f"frame {frame.frame_id} layer {j}: tensor shape "
                    f"{tuple(arr.shape)} drifted from declared {tuple(shape)}"
                )
            parts.append(arr.tobytes(order="C"))
        body = b"".join(parts)
        self.sink.write(_I64.pack(len(body)))
        self.sink.write(body)
        self.frames_written += 1


def write_file(path: str, header: Header, frames: Iterable[Frame]) -> int:
    with open(path, "wb") as sink:
        writer = Writer(sink, header)
        for frame in frames:
            writer.write_frame(frame)
        return writer.frames_written


def read(source: Union[bytes, str, BinaryIO]) -> tuple[Header, Iterator[Frame]]:
    if isinstance(source, (bytes, bytearray)):
        src: BinaryIO = io.BytesIO(source)
    elif isinstance(source, str):
        src = open(source, "rb")
    else:
        src = source
    if src.read(len(MAGIC)) != MAGIC:
        raise DStreamError("bad magic")
    (header_len,) = _U32.unpack(src.read(4))
    header = Header.from_json(src.read(header_len))

    def frames() -> Iterator[Frame]:
        while True:
            raw = src.read(8)
            if not raw:
                return
            (record_len,) = _I64.unpack(raw)
            body = src.read(record_len)
            if len(body) != record_len:
                raise DStreamError("truncated record")
            pos = 0
            frame_id, det_count, gt_count = struct.unpack_from("<3q", body, pos)
            pos += 24
            dets = []
            for _ in range(det_count):
                dets.append(_DET.unpack_from(body, pos))
                pos += _DET.size
            gts = None
            if gt_count >= 0:
                gts = []
                for _ in range(gt_count):
                    gts.append(_GT.unpack_from(body, pos))
                    pos += _GT.size
            tensors = []
            for c, h, w in header.layer_shapes:
                n = 4 * c * h * w
                tensors.append(
                    np.frombuffer(body[pos:pos + n], dtype="<f4").reshape(c, h, w)
                )
                pos += n
            yield Frame(
                frame_id,
                tuple(dets),
                None if gts is None else tuple(gts),
                tuple(tensors),
            )

    return header, frames()
