"""Record stream format (`.dstream`) shared by exporters, simulators and the monitor.

Layout (all multi-byte values little-endian):

    magic        8 bytes, ``DETMON01``
    header_len   uint32
    header       UTF-8 JSON, ``header_len`` bytes::

        {"version": 1, "num_layers": p,
         "layer_shapes": [[c, h, w], ...],
         "image_size": [width, height],
         "class_names": [...],
         "frame_count": N or null}      # null = unknown / live stream

    frame record, repeated::

        record_len   int64   byte length of the body that follows
        body:
          frame_id   int64
          det_count  int64
          gt_count   int64   -1 when ground truth is absent
          detections det_count x (4 float64 box, int64 class_id, float64 confidence)
          ground truth gt_count x (4 float64 box, int64 class_id)
          tensors    p blobs, layer j = c_j*h_j*w_j float32, row-major

Frame tensors are stored exactly as 32-bit reals, so serialization round-trips
bit-exactly. Readers are lazy: one frame's payload is resident at a time.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field, replace
from typing import BinaryIO, Iterable, Iterator, Mapping, Optional, Union

import numpy as np

MAGIC = b"DETMON01"
FORMAT_VERSION = 1

_DET_STRUCT = struct.Struct("<4dqd")  # box, class_id, confidence
_GT_STRUCT = struct.Struct("<4dq")  # box, class_id
_I64 = struct.Struct("<q")
_U32 = struct.Struct("<I")


class StreamError(Exception):
    """Base class for stream format and content errors."""


class StreamFormatError(StreamError):
    """Source is not a well-formed ``.dstream`` (bad magic, bad header, ...)."""


class TruncatedStreamError(StreamFormatError):
    """Stream ends mid-record; ``byte_offset`` is where the cut was detected."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class ShapeMismatchError(StreamError):
    """A frame's tensor does not match the header's declared layer shape."""

    def __init__(self, frame_id: int, layer_index: int, expected, actual):
        super().__init__(
            f"frame {frame_id} layer {layer_index}: expected tensor shape "
            f"{tuple(expected)}, got {tuple(actual)}"
        )
        self.frame_id = frame_id
        self.layer_index = layer_index


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates, corners exclusive-ordered."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class Detection:
    box: BBox
    class_id: int
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruthObject:
    box: BBox
    class_id: int


@dataclass(frozen=True)
class StreamHeader:
    layer_shapes: tuple[tuple[int, int, int], ...]
    image_size: tuple[int, int]
    class_names: tuple[str, ...]
    frame_count: Optional[int] = None  # None = unknown (live stream)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        object.__setattr__(
            self, "layer_shapes", tuple(tuple(int(d) for d in s) for s in self.layer_shapes)
        )
        object.__setattr__(self, "image_size", tuple(int(d) for d in self.image_size))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if self.num_layers < 1:
            raise ValueError("stream must declare at least one feature layer")
        for shape in self.layer_shapes:
            if len(shape) != 3 or any(d < 1 for d in shape):
                raise ValueError(f"invalid layer shape {shape}")
        if any(d < 1 for d in self.image_size):
            raise ValueError(f"invalid image size {self.image_size}")
        if not self.class_names:
            raise ValueError("class_names must be non-empty")
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class_names must be unique")
        if self.frame_count is not None and self.frame_count < 0:
            raise ValueError("frame_count must be >= 0 or None")

    @property
    def num_layers(self) -> int:
        return len(self.layer_shapes)


@dataclass(frozen=True)
class FrameRecord:
    frame_id: int
    detections: tuple[Detection, ...]
    ground_truth: Optional[tuple[GroundTruthObject, ...]]
    features: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        if self.ground_truth is not None:
            object.__setattr__(self, "ground_truth", tuple(self.ground_truth))
        feats = tuple(np.ascontiguousarray(f, dtype=np.float32) for f in self.features)
        object.__setattr__(self, "features", feats)


def _header_to_json(header: StreamHeader) -> bytes:
    # Field order is fixed so identical headers serialize to identical bytes.
    doc = {
        "version": header.version,
        "num_layers": header.num_layers,
        "layer_shapes": [list(s) for s in header.layer_shapes],
        "image_size": list(header.image_size),
        "class_names": list(header.class_names),
        "frame_count": header.frame_count,
    }
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def _header_from_json(payload: bytes) -> StreamHeader:
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StreamFormatError(f"header is not valid JSON: {exc}") from exc
    try:
        header = StreamHeader(
            layer_shapes=tuple(tuple(s) for s in doc["layer_shapes"]),
            image_size=tuple(doc["image_size"]),
            class_names=tuple(doc["class_names"]),
            frame_count=doc["frame_count"],
            version=int(doc["version"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise StreamFormatError(f"invalid header: {exc}") from exc
    if int(doc["num_layers"]) != header.num_layers:
        raise StreamFormatError("header num_layers disagrees with layer_shapes")
    return header


def _encode_frame(header: StreamHeader, frame: FrameRecord) -> bytes:
    if len(frame.features) != header.num_layers:
        raise ShapeMismatchError(
            frame.frame_id, len(frame.features), (header.num_layers,), (len(frame.features),)
        )
    for j, (tensor, shape) in enumerate(zip(frame.features, header.layer_shapes)):
        if tuple(tensor.shape) != shape:
            raise ShapeMismatchError(frame.frame_id, j, shape, tensor.shape)

    parts = [_I64.pack(frame.frame_id)]
    parts.append(_I64.pack(len(frame.detections)))
    gt = frame.ground_truth
    parts.append(_I64.pack(-1 if gt is None else len(gt)))
    for det in frame.detections:
        b = det.box
        parts.append(_DET_STRUCT.pack(b.x_min, b.y_min, b.x_max, b.y_max,
                                      det.class_id, det.confidence))
    if gt is not None:
        for obj in gt:
            b = obj.box
            parts.append(_GT_STRUCT.pack(b.x_min, b.y_min, b.x_max, b.y_max, obj.class_id))
    for tensor in frame.features:
        arr = tensor.astype("<f4", copy=False)
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def write_stream(header: StreamHeader, frames: Iterable[FrameRecord]) -> bytes:
    """Serialize a stream; ``read_stream`` of the result reproduces it bit-exactly."""
    buf = io.BytesIO()
    count = write_stream_to(buf, header, frames)
    if header.frame_count is not None and count != header.frame_count:
        raise StreamError(
            f"header declares {header.frame_count} frames but {count} were written"
        )
    return buf.getvalue()


def write_stream_to(sink: BinaryIO, header: StreamHeader, frames: Iterable[FrameRecord]) -> int:
    """Streaming variant of :func:`write_stream`; returns the frame count."""
    header_json = _header_to_json(header)
    sink.write(MAGIC)
    sink.write(_U32.pack(len(header_json)))
    sink.write(header_json)
    count = 0
    last_id = None
    for frame in frames:
        if last_id is not None and frame.frame_id <= last_id:
            raise StreamError(
                f"frame ids must be strictly increasing, got {frame.frame_id} after {last_id}"
            )
        last_id = frame.frame_id
        body = _encode_frame(header, frame)
        sink.write(_I64.pack(len(body)))
        sink.write(body)
        count += 1
    return count


def _read_exact(src: BinaryIO, n: int, offset: int, what: str) -> bytes:
    data = src.read(n)
    if len(data) != n:
        raise TruncatedStreamError(f"stream cut while reading {what}", offset + len(data))
    return data


def _decode_frame(header: StreamHeader, body: bytes, body_offset: int) -> FrameRecord:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(body):
            raise TruncatedStreamError(f"record too short for {what}", body_offset + len(body))
        chunk = body[pos:pos + n]
        pos += n
        return chunk

    frame_id = _I64.unpack(take(8, "frame id"))[0]
    det_count = _I64.unpack(take(8, "detection count"))[0]
    gt_count = _I64.unpack(take(8, "ground-truth count"))[0]
    if det_count < 0 or gt_count < -1:
        raise StreamFormatError(f"frame {frame_id}: negative table count")

    detections = []
    for _ in range(det_count):
        x0, y0, x1, y1, cls, conf = _DET_STRUCT.unpack(take(_DET_STRUCT.size, "detection"))
        detections.append(Detection(BBox(x0, y0, x1, y1), cls, conf))
    ground_truth = None
    if gt_count >= 0:
        ground_truth = []
        for _ in range(gt_count):
            x0, y0, x1, y1, cls = _GT_STRUCT.unpack(take(_GT_STRUCT.size, "ground truth"))
            ground_truth.append(GroundTruthObject(BBox(x0, y0, x1, y1), cls))

    features = []
    for j, (c, h, w) in enumerate(header.layer_shapes):
        raw = take(4 * c * h * w, f"layer {j} tensor")
        features.append(np.frombuffer(raw, dtype="<f4").reshape(c, h, w))
    if pos != len(body):
        raise StreamFormatError(f"frame {frame_id}: {len(body) - pos} trailing bytes in record")
    return FrameRecord(frame_id, tuple(detections),
                       None if ground_truth is None else tuple(ground_truth),
                       tuple(features))


Source = Union[bytes, bytearray, str, BinaryIO]


def _open_source(source: Source) -> BinaryIO:
    if isinstance(source, (bytes, bytearray)):
        return io.BytesIO(source)
    if isinstance(source, str):
        return open(source, "rb")
    return source


def read_stream(source: Source) -> tuple[StreamHeader, Iterator[FrameRecord]]:
    """Open a stream and return its header plus a lazy frame iterator.

    The header is read eagerly; frames are decoded one at a time as the
    iterator is advanced, so memory stays bounded by one frame's payload.
    """
    src = _open_source(source)
    magic = src.read(len(MAGIC))
    if len(magic) < len(MAGIC) or magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    offset = len(MAGIC)
    raw_len = _read_exact(src, 4, offset, "header length")
    offset += 4
    header_len = _U32.unpack(raw_len)[0]
    header = _header_from_json(_read_exact(src, header_len, offset, "header"))
    offset += header_len

    def frames() -> Iterator[FrameRecord]:
        pos = offset
        last_id = None
        while True:
            raw = src.read(8)
            if not raw:
                return
            if len(raw) < 8:
                raise TruncatedStreamError("stream cut inside record length", pos + len(raw))
            record_len = _I64.unpack(raw)[0]
            pos += 8
            if record_len < 0:
                raise StreamFormatError(f"negative record length at byte {pos - 8}")
            body = _read_exact(src, record_len, pos, "frame record")
            frame = _decode_frame(header, body, pos)
            pos += record_len
            if last_id is not None and frame.frame_id <= last_id:
                raise StreamError(
                    f"frame ids must be strictly increasing, got {frame.frame_id} after {last_id}"
                )
            last_id = frame.frame_id
            yield frame

    return header, frames()


def read_all(source: Source) -> tuple[StreamHeader, list[FrameRecord]]:
    """Convenience eager reader."""
    header, frames = read_stream(source)
    return header, list(frames)


DEFAULT_MIN_BOX_SIZE = 25.0


def _box_large_enough(box: BBox, min_size_px: float) -> bool:
    return box.width >= min_size_px and box.height >= min_size_px


def preprocess(
    header: StreamHeader,
    frames: Iterable[FrameRecord],
    min_size_px: float = DEFAULT_MIN_BOX_SIZE,
    class_merge_map: Optional[Mapping[str, str]] = None,
) -> tuple[StreamHeader, Iterator[FrameRecord]]:
    """Apply the standard ingestion filters to a stream.

    Boxes (detections and ground truth alike) narrower or shorter than
    ``min_size_px`` are dropped, and class names are remapped through
    ``class_merge_map`` (source name -> target name), rewriting the header's
    class list to the merged set. Idempotent for fixed arguments.
    """
    merge = dict(class_merge_map or {})
    unknown = [name for name in merge if name not in header.class_names]
    if unknown:
        raise ValueError(f"class_merge_map names unknown classes: {', '.join(sorted(unknown))}")

    merged_names: list[str] = []
    index_map: dict[int, int] = {}
    for old_id, name in enumerate(header.class_names):
        target = merge.get(name, name)
        if target not in merged_names:
            merged_names.append(target)
        index_map[old_id] = merged_names.index(target)

    new_header = replace(header, class_names=tuple(merged_names), frame_count=None)

    def transform() -> Iterator[FrameRecord]:
        for frame in frames:
            dets = tuple(
                Detection(d.box, index_map[d.class_id], d.confidence)
                for d in frame.detections
                if _box_large_enough(d.box, min_size_px)
            )
            gt = frame.ground_truth
            if gt is not None:
                gt = tuple(
                    GroundTruthObject(g.box, index_map[g.class_id])
                    for g in gt
                    if _box_large_enough(g.box, min_size_px)
                )
            yield FrameRecord(frame.frame_id, dets, gt, frame.features)

    return new_header, transform()


@dataclass
class ValidationReport:
    """Outcome of :func:`validate`: content problems found in a stream."""

    problems: list[str] = field(default_factory=list)
    header: Optional[StreamHeader] = None
    frames_read: int = 0

    @property
    def ok(self) -> bool:
        return not self.problems

    def __str__(self) -> str:
        status = "OK" if self.ok else f"{len(self.problems)} problem(s)"
        lines = [f"validate: {status}, {self.frames_read} frame(s)"]
        lines.extend(f"  - {p}" for p in self.problems)
        return "\n".join(lines)


def validate(source: Source) -> ValidationReport:
    """Fully scan a stream and report every format or invariant violation."""
    report = ValidationReport()
    try:
        header, frames = read_stream(source)
    except StreamError as exc:
        report.problems.append(str(exc))
        return report
    report.header = header
    img_w, img_h = header.image_size
    num_classes = len(header.class_names)
    try:
        for frame in frames:
            report.frames_read += 1
            fid = frame.frame_id
            for kind, objs in (("detection", frame.detections),
                               ("ground truth", frame.ground_truth or ())):
                for obj in objs:
                    b = obj.box
                    if not (0 <= obj.class_id < num_classes):
                        report.problems.append(
                            f"frame {fid}: {kind} class_id {obj.class_id} out of range")
                    if b.x_min < 0 or b.y_min < 0 or b.x_max > img_w or b.y_max > img_h:
                        report.problems.append(
                            f"frame {fid}: {kind} box extends outside the image")
            for det in frame.detections:
                if not (0.0 <= det.confidence <= 1.0):
                    report.problems.append(
                        f"frame {fid}: confidence {det.confidence} outside [0, 1]")
    except StreamError as exc:
        report.problems.append(str(exc))
        return report
    if header.frame_count is not None and report.frames_read != header.frame_count:
        report.problems.append(
            f"header declares {header.frame_count} frames, stream holds {report.frames_read}")
    return report
