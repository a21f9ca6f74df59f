"""dstream-export: image folder -> .dstream via a torchvision detector."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .annotations import AnnotationError
from .dstream import DStreamError
from .export import DEFAULT_LAYERS, ExportConfig, ExportError, export


def parse_label_map(spec: str) -> dict[int, str]:
    mapping: dict[int, str] = {}
    for item in spec.split(","):
        if not item:
            continue
        key, _, value = item.partition("=")
        mapping[int(key)] = value
    return mapping


def parse_name_map(spec: str) -> dict[str, str]:
    mapping: dict[str, str] = {}
    for item in spec.split(","):
        if not item:
            continue
        key, _, value = item.partition("=")
        mapping[key] = value
    return mapping


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dstream-export",
        description="Capture detector backbone activations into a .dstream file.",
    )
    parser.add_argument("--images", required=True, help="image-sequence folder")
    parser.add_argument("--out", required=True, help="output .dstream path")
    parser.add_argument("--model", default="fasterrcnn_resnet50_fpn")
    parser.add_argument("--weights", default=None,
                        help="torchvision weights enum, e.g. DEFAULT (downloads)")
    parser.add_argument("--layers", default=",".join(DEFAULT_LAYERS),
                        help="comma-separated backbone module names, shallow to deep")
    parser.add_argument("--resize", default="160x96", help="fixed WxH input size")
    parser.add_argument("--class-names", dest="class_names", default="vehicle,pedestrian")
    parser.add_argument("--label-map", dest="label_map", default="",
                        help="detector label ids to class names, e.g. 3=vehicle,1=pedestrian")
    parser.add_argument("--annotations", default=None,
                        help="JSON index or directory of per-image text files")
    parser.add_argument("--annotation-class-map", dest="annotation_class_map", default="",
                        help="annotation names to class names, e.g. car=vehicle")
    parser.add_argument("--min-score", dest="min_score", type=float, default=0.0)
    parser.add_argument("--min-box-size", dest="min_box_size", type=float, default=0.0)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        width, _, height = args.resize.partition("x")
        config = ExportConfig(
            model_name=args.model,
            weights=args.weights,
            capture_layers=tuple(args.layers.split(",")),
            resize=(int(width), int(height)),
            class_names=tuple(args.class_names.split(",")),
            label_map=parse_label_map(args.label_map),
            annotation_class_map=parse_name_map(args.annotation_class_map),
            annotations=args.annotations,
            min_score=args.min_score,
            min_box_size=args.min_box_size,
        )
        header = export(args.images, args.out, config)
    except (ExportError, AnnotationError, DStreamError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(
        f"wrote {args.out}: {header.frame_count} frames, "
        f"layers {[list(s) for s in header.layer_shapes]}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
