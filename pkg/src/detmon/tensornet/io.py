"""Model file envelope shared by the monitor and the baseline classifiers.

Layout (little-endian): magic ``DMONMDL1``, uint32 header length, UTF-8 JSON
header (version, kind, seed, config, norm_stats, parameter manifest), then
raw float32 parameter blobs in manifest order. Serialization is byte-stable:
identical models produce identical files.
"""

from __future__ import annotations

import io
import json
import struct
from typing import BinaryIO, Optional, Union

import numpy as np

from ..features import NormStats
from .model import CascadeConfig, MonitorModel, expected_param_shapes

MODEL_MAGIC = b"DMONMDL1"
_U32 = struct.Struct("<I")

KIND_MONITOR = "monitor"


class ModelFileError(Exception):
    """Model file is malformed or inconsistent with its declared config."""


def _params_to_bytes(params: dict[str, np.ndarray]) -> tuple[list[dict], bytes]:
    manifest = []
    blobs = []
    for name in sorted(params):
        arr = np.asarray(params[name], dtype="<f4")  # keeps 0-d shapes intact
        manifest.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes(order="C"))
    return manifest, b"".join(blobs)


def write_envelope(
    kind: str,
    config_doc: dict,
    norm_means: list[float],
    norm_stds: list[float],
    seed: int,
    params: dict[str, np.ndarray],
    version: int = 1,
) -> bytes:
    manifest, blob = _params_to_bytes(params)
    header = {
        "version": version,
        "kind": kind,
        "seed": seed,
        "config": config_doc,
        "norm_stats": {"means": list(norm_means), "stds": list(norm_stds)},
        "params": manifest,
    }
    payload = json.dumps(header, separators=(",", ":")).encode("utf-8")
    return MODEL_MAGIC + _U32.pack(len(payload)) + payload + blob


def read_envelope(source: Union[bytes, str, BinaryIO]):
    if isinstance(source, (bytes, bytearray)):
        src: BinaryIO = io.BytesIO(source)
    elif isinstance(source, str):
        src = open(source, "rb")
    else:
        src = source
    magic = src.read(len(MODEL_MAGIC))
    if magic != MODEL_MAGIC:
        raise ModelFileError(f"bad model magic {magic!r}")
    raw_len = src.read(4)
    if len(raw_len) < 4:
        raise ModelFileError("model file cut inside header length")
    (header_len,) = _U32.unpack(raw_len)
    payload = src.read(header_len)
    if len(payload) < header_len:
        raise ModelFileError("model file cut inside header")
    try:
        header = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"model header is not valid JSON: {exc}") from exc
    params: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        raw = src.read(4 * count)
        if len(raw) < 4 * count:
            raise ModelFileError(f"model file cut inside parameter '{entry['name']}'")
        params[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return header, params


def save_model(model: MonitorModel, path: Optional[str] = None) -> bytes:
    """Serialize a monitor model; also writes to `path` when given."""
    cfg = model.config
    config_doc = {
        "window_size": cfg.window_size,
        "layer_shapes": [list(s) for s in cfg.layer_shapes],
        "filter_out_channels": cfg.filter_out_channels,
        "kernel_size": cfg.kernel_size,
        "hidden_dims": list(cfg.hidden_dims),
        "num_classes": cfg.num_classes,
        "cascade_mode": cfg.cascade_mode,
    }
    data = write_envelope(
        KIND_MONITOR,
        config_doc,
        list(model.norm_stats.means),
        list(model.norm_stats.stds),
        model.seed,
        model.params,
        version=model.version,
    )
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data


def load_model(source: Union[bytes, str, BinaryIO]) -> MonitorModel:
    """Load and shape-validate a monitor model."""
    header, params = read_envelope(source)
    if header["kind"] != KIND_MONITOR:
        raise ModelFileError(f"expected a monitor model, found kind '{header['kind']}'")
    c = header["config"]
    config = CascadeConfig(
        window_size=int(c["window_size"]),
        layer_shapes=tuple(tuple(s) for s in c["layer_shapes"]),
        filter_out_channels=int(c["filter_out_channels"]),
        kernel_size=int(c["kernel_size"]),
        hidden_dims=tuple(c["hidden_dims"]),
        num_classes=int(c["num_classes"]),
        cascade_mode=c["cascade_mode"],
    )
    expected = expected_param_shapes(config)
    if set(expected) != set(params):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise ModelFileError(f"parameter set mismatch: missing {missing}, extra {extra}")
    for name, shape in expected.items():
        if tuple(params[name].shape) != shape:
            raise ModelFileError(
                f"parameter '{name}' has shape {params[name].shape}, expected {shape}"
            )
    stats = NormStats(tuple(header["norm_stats"]["means"]), tuple(header["norm_stats"]["stds"]))
    return MonitorModel(config, params, stats, int(header["seed"]), int(header["version"]))
