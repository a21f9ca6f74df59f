"""Command-line surface: generate, train, eval, monitor, analyze-window, validate.

Exit codes: 0 success, 2 usage error, 3 data error. Every command is
deterministic given its inputs, configuration and seed. Configuration values
come from built-in defaults, overridden by an optional flat ``key=value``
config file, overridden by command-line flags.
"""

from __future__ import annotations

import argparse
import queue
import sys
import threading
import time
from dataclasses import dataclass, fields, replace
from typing import Optional, Sequence

import numpy as np

from . import baselines as bl
from .features import pool_frame, stack_window, window_features
from .mapeval import label_series, labels_to_csv, window_size_analysis
from .metrics import EvalReport, auroc, build_report, fpr_at_tpr, roc_curve, side_by_side, tpr_at_fpr
from .ordinal import CriticalRule, alert_score, to_alert
from .stream import StreamError, read_all, read_stream, validate
from .synthgen import SynthConfig, difficulty_to_csv, generate_stream
from .tensornet import CascadeConfig, load_model, predict, save_model, train_monitor
from .tensornet.io import ModelFileError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3

MONITOR = "monitor"
BASELINE1 = "baseline1"
BASELINE2 = "baseline2"


@dataclass(frozen=True)
class RunConfig:
    window_size: int = 10
    stride: int = 1
    num_classes: int = 5
    critical_class: int = 2
    iou_threshold: float = 0.5
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 60
    seed: int = 0

    def rule(self) -> CriticalRule:
        return CriticalRule(self.critical_class)


def parse_config_file(path: str) -> dict[str, str]:
    """Flat key=value lines; '#' starts a comment."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    if getattr(args, "config", None):
        file_values = parse_config_file(args.config)
        known = {f.name: f.type for f in fields(RunConfig)}
        updates = {}
        for key, raw in file_values.items():
            if key not in known:
                raise ValueError(f"unknown config key '{key}'")
            caster = float if known[key] is float else int
            updates[key] = caster(raw)
        config = replace(config, **updates)
    overrides = {
        f.name: getattr(args, f.name)
        for f in fields(RunConfig)
        if getattr(args, f.name, None) is not None
    }
    return replace(config, **overrides)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value configuration file")
    parser.add_argument("--window-size", dest="window_size", type=int)
    parser.add_argument("--stride", type=int)
    parser.add_argument("--num-classes", dest="num_classes", type=int)
    parser.add_argument("--critical-class", dest="critical_class", type=int)
    parser.add_argument("--iou-threshold", dest="iou_threshold", type=float)
    parser.add_argument("--learning-rate", dest="learning_rate", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--seed", type=int)


def _write_text(path: Optional[str], text: str) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --- generate ---------------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    config = SynthConfig(
        seed=args.seed if args.seed is not None else 0,
        frame_count=args.frames,
        miss_gain=args.miss_gain,
        localization_gain=args.localization_gain,
        spurious_gain=args.spurious_gain,
        feature_noise_gain=args.feature_noise_gain,
    )
    data, difficulties = generate_stream(config)
    with open(args.out, "wb") as fh:
        fh.write(data)
    if args.difficulty_out:
        _write_text(args.difficulty_out, difficulty_to_csv(difficulties))
    print(f"wrote {args.out}: {config.frame_count} frames, {len(data)} bytes")
    return EXIT_OK


# --- train -------------------------------------------------------------------------


def _labeled_windows(frames, config: RunConfig):
    if len(frames) < config.window_size:
        raise ValueError(
            f"stream has {len(frames)} frames, shorter than one window "
            f"of {config.window_size}"
        )
    return label_series(
        frames,
        config.window_size,
        stride=config.stride,
        iou_threshold=config.iou_threshold,
        num_classes=config.num_classes,
    )


def cmd_train(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    header, frames = read_all(args.stream)
    labels = _labeled_windows(frames, config)
    defined = [(i, l) for i, l in enumerate(labels) if l.defined]
    if not defined:
        raise ValueError("no window has a defined mAP label; cannot train")

    if args.kind == MONITOR:
        wfs = [wf for _, wf in window_features(frames, config.window_size, config.stride)]
        dataset = [(wfs[i], l.ordinal_class) for i, l in defined]
        cascade = CascadeConfig(
            window_size=config.window_size,
            layer_shapes=header.layer_shapes,
            num_classes=config.num_classes,
        )
        model, losses = train_monitor(
            dataset,
            cascade,
            seed=config.seed,
            epochs=config.epochs,
            learning_rate=config.learning_rate,
            batch_size=config.batch_size,
        )
        save_model(model, args.model_out)
    else:
        feature_kind = "handcrafted" if args.kind == BASELINE1 else "pooled_last_layer"
        starts = range(0, len(frames) - config.window_size + 1, config.stride)
        if args.kind == BASELINE1:
            vectors = [
                bl.window_handcrafted(frames[s:s + config.window_size], header.image_size)
                for s in starts
            ]
        else:
            vectors = [
                bl.window_pooled_last_layer(frames[s:s + config.window_size]) for s in starts
            ]
        x = np.stack([vectors[i] for i, _ in defined])
        y = [to_alert(l.ordinal_class, config.rule()) for _, l in defined]
        model, losses = bl.train_baseline(
            x,
            y,
            feature_kind,
            seed=config.seed,
            epochs=config.epochs,
            learning_rate=config.learning_rate,
            batch_size=config.batch_size,
        )
        bl.save_baseline(model, args.model_out)

    if args.log_out:
        rows = ["epoch,loss"] + [f"{i},{loss:.6f}" for i, loss in enumerate(losses)]
        _write_text(args.log_out, "\n".join(rows) + "\n")
    print(
        f"trained {args.kind} on {len(defined)} windows; "
        f"initial loss {losses[0]:.4f}, final loss {losses[-1]:.4f}; "
        f"model written to {args.model_out}"
    )
    return EXIT_OK


# --- eval --------------------------------------------------------------------------


def _monitor_report(frames, labels, model, config: RunConfig, threshold: float):
    rule = config.rule()
    preds, scores, true_cls, alerts = [], [], [], []
    windows = window_features(frames, config.window_size, config.stride)
    for label, (_, wf) in zip(labels, windows):
        if not label.defined:
            continue
        cls, probs = predict(wf, model, threshold)
        preds.append(cls)
        scores.append(alert_score(probs, rule))
        true_cls.append(label.ordinal_class)
        alerts.append(to_alert(label.ordinal_class, rule))
    return build_report(preds, true_cls, scores, alerts)


def _baseline_report(frames, labels, model, header, config: RunConfig):
    rule = config.rule()
    starts = list(range(0, len(frames) - config.window_size + 1, config.stride))
    scores, true_cls, alerts = [], [], []
    for i, label in enumerate(labels):
        if not label.defined:
            continue
        window = frames[starts[i]:starts[i] + config.window_size]
        if model.feature_kind == "handcrafted":
            vec = bl.window_handcrafted(window, header.image_size)
        else:
            vec = bl.window_pooled_last_layer(window)
        scores.append(float(bl.predict_baseline(vec, model)[0]))
        true_cls.append(label.ordinal_class)
        alerts.append(to_alert(label.ordinal_class, rule))
    points = roc_curve(scores, alerts)
    labels_arr = np.asarray(alerts, dtype=bool)
    # Baselines are binary alert models: ordinal errors do not apply, so the
    # report carries only the ROC side; the ordinal slots hold alert ZOE.
    pred_alerts = [s > 0.5 for s in scores]
    zoe = float(np.mean([p != a for p, a in zip(pred_alerts, alerts)]))
    return EvalReport(
        mae=zoe,
        rmse=float(np.sqrt(zoe)),
        zoe=zoe,
        roc_points=points,
        auroc=auroc(points),
        tpr_at_fpr5=tpr_at_fpr(points),
        fpr_at_tpr95=fpr_at_tpr(points),
        windows=len(scores),
        positives=int(labels_arr.sum()),
        negatives=int((~labels_arr).sum()),
    )


def cmd_eval(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    header, frames = read_all(args.stream)
    labels = _labeled_windows(frames, config)
    if not any(l.defined for l in labels):
        raise ValueError("no window has a defined mAP label; nothing to evaluate")
    model = load_model(args.model)
    reports = {"monitor": _monitor_report(frames, labels, model, config, args.threshold)}
    if args.baseline1:
        reports["baseline1"] = _baseline_report(
            frames, labels, bl.load_baseline(args.baseline1), header, config
        )
    if args.baseline2:
        reports["baseline2"] = _baseline_report(
            frames, labels, bl.load_baseline(args.baseline2), header, config
        )
    print(reports["monitor"].to_text("monitor"))
    if len(reports) > 1:
        print()
        print(side_by_side(reports))
    if args.csv_out:
        header_row = "system," + ",".join(name for name, _ in reports["monitor"].as_table())
        rows = [header_row]
        for name, report in reports.items():
            rows.append(f"{name},{report.to_csv_row()}")
        _write_text(args.csv_out, "\n".join(rows) + "\n")
    if args.labels_out:
        _write_text(args.labels_out, labels_to_csv(labels))
    return EXIT_OK


# --- monitor -----------------------------------------------------------------------


def cmd_monitor(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    model = load_model(args.model)
    header, frame_iter = read_stream(args.stream)
    if tuple(header.layer_shapes) != tuple(model.config.layer_shapes):
        raise ValueError(
            f"model expects backbone layers {model.config.layer_shapes}, "
            f"stream provides {header.layer_shapes}"
        )
    if model.config.window_size != config.window_size:
        raise ValueError(
            f"model was trained with window size {model.config.window_size}, "
            f"requested {config.window_size}"
        )
    rule = config.rule()
    threshold = args.threshold

    # Two-stage pipeline: the ingest thread parses records into a bounded
    # queue (blocking on back-pressure); this thread windows and infers.
    # Single producer, single consumer: output order equals input order.
    frame_queue: queue.Queue = queue.Queue(maxsize=args.queue_size)
    ingest_error: list[BaseException] = []

    def ingest():
        try:
            for frame in frame_iter:
                frame_queue.put(frame)
        except BaseException as exc:  # surfaced on the consumer side
            ingest_error.append(exc)
        finally:
            frame_queue.put(None)

    worker = threading.Thread(target=ingest, name="dstream-ingest", daemon=True)
    worker.start()

    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    alerts_out = open(args.alerts_out, "w", encoding="utf-8") if args.alerts_out else None
    emitted = 0
    try:
        out.write("start_frame,class,alert,score,latency_ms\n")

        def emit(start_frame, wf):
            nonlocal emitted
            t0 = time.perf_counter()
            cls, probs = predict(wf, model, threshold)
            score = alert_score(probs, rule)
            alert = to_alert(cls, rule)
            latency_ms = (time.perf_counter() - t0) * 1000.0
            line = f"{start_frame},{cls},{int(alert)},{score:.6f},{latency_ms:.3f}"
            out.write(line + "\n")
            if alert and alerts_out:
                alerts_out.write(line + "\n")
            emitted += 1

        pooled = []
        while True:
            frame = frame_queue.get()
            if frame is None:
                break
            pooled.append((frame.frame_id, pool_frame(frame)))
            if len(pooled) > config.window_size:
                pooled.pop(0)
            if len(pooled) == config.window_size:
                emit(pooled[0][0], stack_window([maps for _, maps in pooled]))
        if ingest_error:
            raise ingest_error[0]
    finally:
        if args.out:
            out.close()
        if alerts_out:
            alerts_out.close()
    worker.join()
    print(f"monitored {emitted} windows", file=sys.stderr)
    return EXIT_OK


# --- analyze-window -------------------------------------------------------------------


def cmd_analyze_window(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    header, frames = read_all(args.stream)
    sizes = [int(s) for s in args.window_sizes.split(",") if s]
    rows = window_size_analysis(frames, sizes, iou_threshold=config.iou_threshold)
    table = ["window_size,mean_abs_diff,windows"]
    table += [f"{r.window_size},{r.mean_abs_diff:.6f},{r.num_windows}" for r in rows]
    text = "\n".join(table) + "\n"
    _write_text(args.out, text)
    if args.out:
        print(f"wrote {args.out}")
    return EXIT_OK


# --- validate ----------------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    report = validate(args.stream)
    print(report)
    return EXIT_OK if report.ok else EXIT_DATA


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detmon",
        description="Streaming quality monitor for object detectors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="produce a synthetic .dstream")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=SynthConfig.frame_count)
    p.add_argument("--difficulty-out", dest="difficulty_out")
    p.add_argument("--miss-gain", dest="miss_gain", type=float, default=SynthConfig.miss_gain)
    p.add_argument("--localization-gain", dest="localization_gain", type=float,
                   default=SynthConfig.localization_gain)
    p.add_argument("--spurious-gain", dest="spurious_gain", type=float,
                   default=SynthConfig.spurious_gain)
    p.add_argument("--feature-noise-gain", dest="feature_noise_gain", type=float,
                   default=SynthConfig.feature_noise_gain)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit the monitor or a baseline on a labeled stream")
    p.add_argument("--stream", required=True)
    p.add_argument("--model-out", dest="model_out", required=True)
    p.add_argument("--kind", choices=[MONITOR, BASELINE1, BASELINE2], default=MONITOR)
    p.add_argument("--log-out", dest="log_out", help="per-epoch loss table (csv)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained monitor on a labeled stream")
    p.add_argument("--stream", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--baseline1", help="trained baseline1 model file for comparison")
    p.add_argument("--baseline2", help="trained baseline2 model file for comparison")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--csv-out", dest="csv_out")
    p.add_argument("--labels-out", dest="labels_out", help="ground-truth label table (csv)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("monitor", help="live per-window predictions (no ground truth)")
    p.add_argument("--stream", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", help="emissions csv (default stdout)")
    p.add_argument("--alerts-out", dest="alerts_out", help="alert-only sink")
    p.add_argument("--queue-size", dest="queue_size", type=int, default=16)
    _add_config_flags(p)
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("analyze-window", help="window-size smoothing study")
    p.add_argument("--stream", required=True)
    p.add_argument("--window-sizes", dest="window_sizes", default="1,5,10,20")
    p.add_argument("--out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_analyze_window)

    p = sub.add_parser("validate", help="check a .dstream for format/content problems")
    p.add_argument("--stream", required=True)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (StreamError, ModelFileError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
