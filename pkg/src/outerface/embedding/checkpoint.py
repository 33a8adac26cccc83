"""Binary checkpoint: magic ``OFK1``, a JSON config block, then f32 tensors.

Layout (all little-endian)::

    4 bytes   magic b"OFK1"
    u32       format version (1)
    u32       length of the UTF-8 JSON config block
    ...       JSON config block
    ...       float32 tensors, in ModelConfig.param_shapes() order
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .network import EmbeddingModel, ModelConfig

MAGIC = b"OFK1"
VERSION = 1


def save_model(model: EmbeddingModel, path, extra: dict | None = None) -> None:
    shapes = model.config.param_shapes()
    header = {
        "model": model.config.to_dict(),
        "tensors": [[name, list(shape)] for name, shape in shapes.items()],
        "extra": model.meta if extra is None else extra,
    }
    block = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(block)))
        fh.write(block)
        for name in shapes:
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f4").tobytes())


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh)[0]


def _read_header(fh):
    if fh.read(4) != MAGIC:
        raise CheckpointError("not an OFK1 checkpoint")
    raw = fh.read(8)
    if len(raw) != 8:
        raise CheckpointError("truncated checkpoint header")
    version, size = struct.unpack("<II", raw)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(fh.read(size).decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"corrupt config block: {exc}") from exc
    return header, version


def load_model(path, dtype: str = "float32") -> tuple[EmbeddingModel, dict]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no such checkpoint: {path}")
    with open(path, "rb") as fh:
        header, _ = _read_header(fh)
        mcfg = dict(header["model"])
        mcfg["dtype"] = dtype
        cfg = ModelConfig(**mcfg)
        params = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape))
            buf = fh.read(4 * count)
            if len(buf) != 4 * count:
                raise CheckpointError(f"truncated tensor {name}")
            params[name] = np.frombuffer(buf, dtype="<f4").reshape(shape).astype(dtype)
        if fh.read(1):
            raise CheckpointError("trailing bytes after last tensor")
    extra = header.get("extra", {})
    return EmbeddingModel(cfg, params, meta=extra), extra
