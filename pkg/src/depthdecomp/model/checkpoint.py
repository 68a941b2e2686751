"""Versioned binary checkpoint container.

Layout: 4-byte magic, little-endian u32 format version, u64 header
length, a UTF-8 JSON header (model config plus parameter name/shape/
offset table), then the raw parameter payload as little-endian float32
in header order. Serialization is canonical (sorted JSON keys, fixed
parameter order) so identical weights produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from ..errors import BadHeaderError, ConfigMismatchError, UnreadableFileError
from .config import ModelConfig
from .network import DepthDecompositionNet

MAGIC = b"DDCK"
FORMAT_VERSION = 1


def save_checkpoint(path, model: DepthDecompositionNet, extra: dict | None = None):
    """Write model weights and config; extra must be JSON-serializable."""
    params = []
    payloads = []
    offset = 0
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        params.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payloads.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "format": "depthdecomp-checkpoint",
        "config": model.cfg.as_dict(),
        "params": params,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for chunk in payloads:
            fh.write(chunk)


def load_checkpoint(path, expected_config: ModelConfig | None = None):
    """Read (config, name->float32 array dict, extra) from a checkpoint file."""
    path = Path(path)
    if not path.is_file():
        raise UnreadableFileError(f"checkpoint {path} does not exist")
    blob = path.read_bytes()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise BadHeaderError(f"{path} is not a depthdecomp checkpoint")
    version, header_len = struct.unpack("<IQ", blob[4:16])
    if version != FORMAT_VERSION:
        raise BadHeaderError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BadHeaderError(f"corrupt checkpoint header in {path}") from exc
    cfg = ModelConfig.from_dict(header["config"])
    if expected_config is not None and cfg.as_dict() != expected_config.as_dict():
        raise ConfigMismatchError(
            "checkpoint config does not match the expected model config"
        )
    data = blob[16 + header_len :]
    arrays = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + 4 * count
        if end > len(data):
            raise BadHeaderError(f"truncated checkpoint payload in {path}")
        arrays[entry["name"]] = np.frombuffer(
            data[start:end], dtype="<f4"
        ).reshape(shape).copy()
    return cfg, arrays, header.get("extra", {})


def load_model(path, expected_config: ModelConfig | None = None):
    """Rebuild the network from a checkpoint; returns (model, extra)."""
    cfg, arrays, extra = load_checkpoint(path, expected_config)
    model = DepthDecompositionNet(cfg)
    state = {name: torch.from_numpy(arr) for name, arr in arrays.items()}
    model.load_state_dict(state)
    return model, extra
