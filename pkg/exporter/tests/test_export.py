"""End-to-end export integration.

Offline environment: torchvision pretrained weights cannot be downloaded, so
the detector runs with random initialization. That leaves detection quality
meaningless but exercises the full plumbing contract: fixed-shape hook
capture, annotation ingestion, stream conformance, and a complete run of the
monitor toolchain over the exported file.
"""

import subprocess
import sys

import pytest

from dstream_exporter.dstream import read
from dstream_exporter.export import ExportConfig, ExportError, attach_hooks, build_detector, export

# Random-weight detectors emit arbitrary label ids; map every id onto the
# monitor's class list so some detections survive.
LABEL_MAP = {i: ("vehicle" if i % 2 == 0 else "pedestrian") for i in range(91)}


def make_config(ann_path):
    return ExportConfig(
        annotations=ann_path,
        label_map=LABEL_MAP,
        annotation_class_map={"car": "vehicle", "person": "pedestrian"},
    )


@pytest.fixture(scope="session")
def exported(clip, tmp_path_factory):
    images_dir, ann_path = clip
    out = str(tmp_path_factory.mktemp("out") / "clip.dstream")
    header = export(images_dir, out, make_config(ann_path))
    return out, header


def run_detmon(*args):
    return subprocess.run(
        [sys.executable, "-m", "detmon.cli", *args], capture_output=True, text=True
    )


def test_export_writes_expected_frames(exported):
    out, header = exported
    assert header.frame_count == 50
    assert len(header.layer_shapes) == 3
    read_header, frames = read(out)
    frames = list(frames)
    assert len(frames) == 50
    assert [f.frame_id for f in frames] == list(range(50))
    assert all(f.ground_truth is not None and len(f.ground_truth) == 2 for f in frames)
    # shallow -> deep: spatial dims shrink
    heights = [s[1] for s in read_header.layer_shapes]
    assert heights == sorted(heights, reverse=True)


def test_exported_stream_validates_cleanly(exported):
    out, _ = exported
    result = run_detmon("validate", "--stream", out)
    assert result.returncode == 0, result.stdout + result.stderr
    assert "OK" in result.stdout


def test_exported_stream_roundtrips_bit_exactly(exported):
    out, _ = exported
    roundtrip = subprocess.run(
        [
            sys.executable, "-c",
            "import sys\n"
            "from detmon.stream import read_all, write_stream\n"
            "data = open(sys.argv[1], 'rb').read()\n"
            "header, frames = read_all(data)\n"
            "sys.exit(0 if write_stream(header, frames) == data else 1)\n",
            out,
        ],
        capture_output=True, text=True,
    )
    assert roundtrip.returncode == 0, roundtrip.stderr


def test_exported_clip_runs_through_monitor_toolchain(exported, tmp_path):
    out, _ = exported
    model_path = str(tmp_path / "monitor.dmon")
    trained = run_detmon(
        "train", "--stream", out, "--model-out", model_path, "--epochs", "2",
    )
    assert trained.returncode == 0, trained.stdout + trained.stderr

    emissions = str(tmp_path / "emissions.csv")
    monitored = run_detmon(
        "monitor", "--stream", out, "--model", model_path, "--out", emissions,
    )
    assert monitored.returncode == 0, monitored.stdout + monitored.stderr
    rows = open(emissions).read().splitlines()
    assert rows[0] == "start_frame,class,alert,score,latency_ms"
    assert len(rows) - 1 == 50 - 10 + 1


def test_unresolvable_layer_name_lists_candidates(clip):
    config = ExportConfig(capture_layers=("backbone.body.layer9",))
    model = build_detector(config)
    with pytest.raises(ExportError, match="layer9"):
        attach_hooks(model, config.capture_layers)


def test_unknown_model_name_rejected(clip):
    with pytest.raises(ExportError, match="unknown detection model"):
        build_detector(ExportConfig(model_name="not_a_model"))
