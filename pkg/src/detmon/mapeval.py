"""Ground-truth evaluation: IoU matching, average precision, per-window mAP
labels, ordinal binning and the window-size smoothing study.

Per-window evaluation pools detections and ground truth across the window's
frames into one ranked list per class; matching itself stays frame-local (a
detection can only consume a ground-truth object of its own frame). The mAP
of a window is the mean AP over the classes that have at least one
ground-truth instance inside it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .stream import BBox, FrameRecord

DEFAULT_IOU_THRESHOLD = 0.5


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes; 1.0 iff identical."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


class RankedDetection(NamedTuple):
    frame_id: int
    box: BBox
    confidence: float


class GtInstance(NamedTuple):
    frame_id: int
    box: BBox


@dataclass(frozen=True)
class MatchResult:
    """TP/FP flags of one class's detections in confidence rank order."""

    tp_flags: tuple[bool, ...]
    gt_count: int


def match_detections(
    dets: Sequence[RankedDetection],
    gts: Sequence[GtInstance],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> MatchResult:
    """Greedy matching in descending confidence for a single class.

    Confidence ties rank the lower frame_id first, then input order. A
    detection is a true positive iff the best-IoU unmatched ground-truth
    object of its frame overlaps it by at least ``iou_threshold``; each
    ground-truth object is consumed at most once.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, dets[i].frame_id, i))
    by_frame: dict[int, list[int]] = {}
    for j, gt in enumerate(gts):
        by_frame.setdefault(gt.frame_id, []).append(j)
    matched = [False] * len(gts)
    flags = []
    for i in order:
        det = dets[i]
        best_j = -1
        best_iou = 0.0
        for j in by_frame.get(det.frame_id, ()):
            if matched[j]:
                continue
            overlap = iou(det.box, gts[j].box)
            if overlap > best_iou:
                best_iou = overlap
                best_j = j
        if best_j >= 0 and best_iou >= iou_threshold:
            matched[best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return MatchResult(tuple(flags), len(gts))


def average_precision(match: MatchResult) -> Optional[float]:
    """Area under the precision-recall curve with the all-points envelope.

    Precision at each recall level is the maximum precision attained at any
    recall greater than or equal to it. Returns None when the class has no
    ground truth (AP undefined).
    """
    if match.gt_count == 0:
        return None
    if not match.tp_flags:
        return 0.0
    tp = np.cumsum(np.asarray(match.tp_flags, dtype=np.float64))
    ranks = np.arange(1, len(match.tp_flags) + 1, dtype=np.float64)
    recall = tp / match.gt_count
    precision = tp / ranks
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev) * envelope))


def _pool_window(frames: Sequence[FrameRecord], classes: Optional[Sequence[int]]):
    dets: dict[int, list[RankedDetection]] = {}
    gts: dict[int, list[GtInstance]] = {}
    for frame in frames:
        if frame.ground_truth is None:
            raise ValueError(
                f"frame {frame.frame_id} carries no ground truth; window labels require it"
            )
        for det in frame.detections:
            dets.setdefault(det.class_id, []).append(
                RankedDetection(frame.frame_id, det.box, det.confidence)
            )
        for gt in frame.ground_truth:
            gts.setdefault(gt.class_id, []).append(GtInstance(frame.frame_id, gt.box))
    if classes is not None:
        allowed = set(classes)
        dets = {c: v for c, v in dets.items() if c in allowed}
        gts = {c: v for c, v in gts.items() if c in allowed}
    return dets, gts


def window_map(
    frames: Sequence[FrameRecord],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    classes: Optional[Sequence[int]] = None,
) -> Optional[float]:
    """mAP over the pooled detections/ground truth of one window of frames.

    Returns None (undefined) when no class has a ground-truth instance.
    Invariant to the order of frames inside the window.
    """
    dets, gts = _pool_window(frames, classes)
    aps = []
    for cls in sorted(gts):
        match = match_detections(dets.get(cls, ()), gts[cls], iou_threshold)
        aps.append(average_precision(match))
    if not aps:
        return None
    return float(sum(aps) / len(aps))


def bin_label(map_value: float, num_classes: int = 5) -> int:
    """Ordinal class of a mAP value: C equal lower-inclusive bins over [0, 1].

    With C=5 the bins span 0.2 each, so class 2 begins at exactly 0.4.
    """
    if not 0.0 <= map_value <= 1.0:
        raise ValueError(f"mAP value {map_value} outside [0, 1]")
    return min(int(math.floor(map_value * num_classes)), num_classes - 1)


@dataclass(frozen=True)
class WindowLabel:
    start_frame: int
    window_size: int
    map_value: Optional[float]
    ordinal_class: Optional[int]

    @property
    def defined(self) -> bool:
        return self.map_value is not None


def label_series(
    frames: Sequence[FrameRecord],
    window_size: int,
    stride: int = 1,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    num_classes: int = 5,
    classes: Optional[Sequence[int]] = None,
) -> list[WindowLabel]:
    """Per-window mAP labels for every window start 0, stride, 2*stride, ...

    Yields floor((N - window_size) / stride) + 1 labels; an empty list (with
    a warning) when the stream is shorter than one window.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if window_size < 1:
        raise ValueError("window size must be >= 1")
    frames = list(frames)
    if len(frames) < window_size:
        warnings.warn(
            f"stream of {len(frames)} frames is shorter than one window "
            f"of {window_size}; no labels produced",
            stacklevel=2,
        )
        return []
    labels = []
    for start in range(0, len(frames) - window_size + 1, stride):
        window = frames[start:start + window_size]
        value = window_map(window, iou_threshold, classes)
        cls = None if value is None else bin_label(value, num_classes)
        labels.append(WindowLabel(window[0].frame_id, window_size, value, cls))
    return labels


@dataclass(frozen=True)
class WindowSizeRow:
    window_size: int
    mean_abs_diff: float
    num_windows: int


def window_size_analysis(
    frames: Sequence[FrameRecord],
    window_sizes: Sequence[int],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    classes: Optional[Sequence[int]] = None,
) -> list[WindowSizeRow]:
    """Mean absolute difference between consecutive per-window mAP values.

    One row per window size, at stride 1. Sizes whose series has no
    consecutive pair of defined mAP values produce no row.
    """
    frames = list(frames)
    rows = []
    for size in window_sizes:
        labels = label_series(frames, size, stride=1, iou_threshold=iou_threshold,
                              classes=classes)
        diffs = [
            abs(b.map_value - a.map_value)
            for a, b in zip(labels, labels[1:])
            if a.defined and b.defined
        ]
        if diffs:
            rows.append(WindowSizeRow(size, float(np.mean(diffs)), len(labels)))
    return rows


def labels_to_csv(labels: Iterable[WindowLabel]) -> str:
    """Comma-separated label table (start_frame, map, class) for plotting."""
    lines = ["start_frame,map,class"]
    for label in labels:
        map_field = "" if label.map_value is None else f"{label.map_value:.6f}"
        cls_field = "" if label.ordinal_class is None else str(label.ordinal_class)
        lines.append(f"{label.start_frame},{map_field},{cls_field}")
    return "\n".join(lines) + "\n"
