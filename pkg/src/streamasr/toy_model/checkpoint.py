"""Versioned binary checkpoints of named float32 tensors.

Layout (little endian)::

    b"TCKP"  u32 version  u32 meta_len  meta (UTF-8 JSON: config + schedule state)
    u32 n_tensors
    per tensor: u16 name_len  name  u32 ndim  u32 dims[ndim]  f32 data[prod(dims)]
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig, param_shapes
from .model import ToyModel

MAGIC = b"TCKP"
VERSION = 1


def _meta_bytes(cfg: ModelConfig, state: dict | None) -> bytes:
    meta = {"config": cfg.to_dict(), "schedule_state": state or {"epoch": 0.0, "active_layers": cfg.encoder.num_layers}}
    return json.dumps(meta, sort_keys=True).encode("utf-8")


def header_bytes(cfg: ModelConfig, state: dict | None = None) -> int:
    """Size of everything in the file except the float payload."""
    size = 4 + 4 + 4 + len(_meta_bytes(cfg, state)) + 4
    for _, name, shape in param_shapes(cfg):
        size += 2 + len(name.encode("utf-8")) + 4 + 4 * len(shape)
    return size


def save_checkpoint(path, model: ToyModel, state: dict | None = None) -> int:
    meta = _meta_bytes(model.cfg, state)
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta)), meta, struct.pack("<I", len(model.shapes))]
    for name, t in model.named_tensors():
        arr = t.detach().cpu().numpy().astype("<f4")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    data = b"".join(parts)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(data)
    return len(data)


def read_checkpoint(path):
    """Return (meta dict, ordered list of (name, float32 array))."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, meta_len = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    meta = json.loads(data[off:off + meta_len].decode("utf-8"))
    off += meta_len
    (n,) = struct.unpack_from("<I", data, off)
    off += 4
    tensors = []
    for _ in range(n):
        (nl,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + nl].decode("utf-8")
        off += nl
        (ndim,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape)
        off += 4 * count
        tensors.append((name, arr))
    if off != len(data):
        raise ValueError(f"{path}: {len(data) - off} trailing bytes")
    return meta, tensors


def load_checkpoint(path, dtype=torch.float64):
    meta, tensors = read_checkpoint(path)
    model = ToyModel(ModelConfig.from_dict(meta["config"]), dtype=dtype)
    with torch.no_grad():
        for name, arr in tensors:
            model.p(name).copy_(torch.from_numpy(arr.astype(np.float64)))
    model.eval()
    return model, meta["schedule_state"]
