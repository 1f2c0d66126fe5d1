"""Versioned binary checkpoints: a magic tag, a JSON header describing the
model config and tensor layout, then a flat little-endian float64 payload.

The header carries everything needed to rebuild the model without guessing;
loading validates magic, version, and payload length before touching tensors.
"""

from __future__ import annotations

import dataclasses
import json
import struct

import numpy as np

from .model import DualStreamModel, ModelConfig

MAGIC = b"GRCKPT1\x00"
FORMAT_VERSION = 1


def save_checkpoint(path: str, model: DualStreamModel,
                    extra: dict | None = None) -> None:
    """Write model config, parameters, and optional metadata to one file."""
    state = model.state_dict()
    tensors = []
    payload = bytearray()
    for name, array in state.items():
        raw = np.ascontiguousarray(array, dtype="<f8").tobytes()
        tensors.append({
            "name": name,
            "shape": list(array.shape),
            "offset": len(payload),
            "nbytes": len(raw),
        })
        payload.extend(raw)
    config = dataclasses.asdict(model.config)
    config["conv_channels"] = list(config["conv_channels"])
    header = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "seed": model.seed,
        "tensors": tensors,
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(payload)


def read_checkpoint(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    """Return (header, tensor dict); raises ValueError on malformed files."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        size_raw = fh.read(8)
        if len(size_raw) != 8:
            raise ValueError(f"{path}: truncated checkpoint header")
        (header_len,) = struct.unpack("<Q", size_raw)
        blob = fh.read(header_len)
        if len(blob) != header_len:
            raise ValueError(f"{path}: truncated checkpoint header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ValueError(f"{path}: corrupt checkpoint header: {e}") from e
        version = header.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(
                f"{path}: unsupported checkpoint version {version!r} "
                f"(this build reads version {FORMAT_VERSION})")
        payload = fh.read()
    state = {}
    for spec in header["tensors"]:
        lo, hi = spec["offset"], spec["offset"] + spec["nbytes"]
        if hi > len(payload):
            raise ValueError(f"{path}: truncated checkpoint payload at {spec['name']!r}")
        flat = np.frombuffer(payload[lo:hi], dtype="<f8")
        state[spec["name"]] = flat.reshape(spec["shape"]).astype(np.float64)
    return header, state


def load_model(path: str) -> tuple[DualStreamModel, dict]:
    """Rebuild a model from a checkpoint; returns (model, extra metadata)."""
    header, state = read_checkpoint(path)
    cfg = dict(header["config"])
    cfg["conv_channels"] = tuple(cfg["conv_channels"])
    model = DualStreamModel(ModelConfig(**cfg), seed=int(header.get("seed", 0)))
    model.load_state_dict(state)
    return model, header.get("extra", {})
