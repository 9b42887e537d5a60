"""Self-describing checkpoint files.

Layout::

    b"INVPCKPT" | u32 version | u64 header length | JSON header | tensor data

The JSON header holds the model config, vocabulary, training log and a
tensor table (name, shape, byte offset). Tensor data is little-endian
float64, so float32 models round-trip exactly too (every float32 value is
representable in float64); the header records the dtype to restore.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np
import torch

from .core import ModelConfig, TrainedModel, init_model
from .vocab import Vocabulary

MAGIC = b"INVPCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: TrainedModel, path: str | os.PathLike) -> None:
    tensors = []
    blobs = []
    offset = 0
    for name, p in model.network.named_parameters():
        data = p.detach().cpu().to(torch.float64).numpy().astype("<f8", copy=False).tobytes()
        tensors.append({"name": name, "shape": list(p.shape), "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    header = {
        "format": "invparse-checkpoint",
        "config": model.config.to_dict(),
        "vocabulary": model.vocabulary.to_dict(),
        "training_log": model.training_log,
        "dtype": model.config.dtype,
        "tensors": tensors,
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(raw)))
        fh.write(raw)
        for b in blobs:
            fh.write(b)


def read_header(path: str | os.PathLike) -> dict:
    with open(path, "rb") as fh:
        return _read(fh)[0]


def _read(fh) -> tuple[dict, int]:
    prefix = fh.read(_PREFIX.size)
    if len(prefix) != _PREFIX.size:
        raise CheckpointError("file too short to be a checkpoint")
    magic, version, length = _PREFIX.unpack(prefix)
    if magic != MAGIC:
        raise CheckpointError("not an invparse checkpoint (bad magic bytes)")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(fh.read(length).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    return header, _PREFIX.size + length


def load_checkpoint(path: str | os.PathLike) -> TrainedModel:
    with open(path, "rb") as fh:
        header, start = _read(fh)
        payload = fh.read()
    config = ModelConfig(**{k: v for k, v in header["config"].items()})
    vocab = Vocabulary.from_dict(header["vocabulary"])
    model = init_model(config)
    model.network.add_rows(len(vocab) - model.network.vocab_size)
    model.vocabulary = vocab
    params = dict(model.network.named_parameters())
    seen = set()
    with torch.no_grad():
        for entry in header["tensors"]:
            name = entry["name"]
            if name not in params:
                raise CheckpointError(f"unexpected tensor {name!r}")
            chunk = payload[entry["offset"]: entry["offset"] + entry["nbytes"]]
            if len(chunk) != entry["nbytes"]:
                raise CheckpointError(f"tensor {name!r} is truncated")
            array = np.frombuffer(chunk, dtype="<f8").reshape(entry["shape"])
            if tuple(params[name].shape) != tuple(entry["shape"]):
                raise CheckpointError(f"shape mismatch for {name!r}")
            params[name].copy_(torch.from_numpy(array.copy()).to(params[name].dtype))
            seen.add(name)
    missing = set(params) - seen
    if missing:
        raise CheckpointError(f"checkpoint lacks tensors: {sorted(missing)}")
    model.training_log = list(header["training_log"])
    return model


def write_training_log(model: TrainedModel, path: str | os.PathLike) -> None:
    """One JSON record per line: epoch, split, loss."""
    Path(path).write_text("".join(json.dumps(r) + "\n" for r in model.training_log), encoding="utf-8")
