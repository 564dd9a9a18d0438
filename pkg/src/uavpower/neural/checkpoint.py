"""Versioned binary checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic b"UAVPCKPT"
    u32       format version
    u32       metadata length L
    L bytes   UTF-8 JSON metadata (hyperparameters, parameter order/shapes,
              scaler, free-form extras)
    ...       float64 LE weight arrays, concatenated in metadata["order"]
    u32       CRC-32 of every preceding byte
"""
from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..dataset import Scaler
from ..errors import ChecksumError, CheckpointError, VersionError
from .model import LstmModel, param_order

MAGIC = b"UAVPCKPT"
VERSION = 1
_HEAD = struct.Struct("<8sII")
_CRC = struct.Struct("<I")


def save_checkpoint(
    model: LstmModel,
    path: Union[str, Path],
    scaler: Optional[Scaler] = None,
    extra: Optional[dict] = None,
) -> None:
    order = param_order()
    meta = {
        "hidden": model.hidden,
        "n_features": model.n_features,
        "dropout_rate": model.dropout_rate,
        "order": order,
        "shapes": {k: list(model.params[k].shape) for k in order},
        "scaler": scaler.to_dict() if scaler is not None else None,
        "extra": extra or {},
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    body = bytearray(_HEAD.pack(MAGIC, VERSION, len(meta_bytes)))
    body += meta_bytes
    for k in order:
        body += np.ascontiguousarray(model.params[k], dtype="<f8").tobytes()
    body += _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(bytes(body))
    os.replace(tmp, path)


def load_checkpoint(path: Union[str, Path]) -> tuple[LstmModel, Optional[Scaler], dict]:
    """Return ``(model, scaler, extra)``; raises on any corruption."""
    data = Path(path).read_bytes()
    if len(data) < _HEAD.size + _CRC.size:
        raise ChecksumError(f"{path}: truncated checkpoint")
    magic, version, meta_len = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a uavpower checkpoint")
    if version != VERSION:
        raise VersionError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
    (stored,) = _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(data[:-_CRC.size]) & 0xFFFFFFFF != stored:
        raise ChecksumError(f"{path}: CRC mismatch")
    off = _HEAD.size
    try:
        meta = json.loads(data[off:off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable metadata") from exc
    off += meta_len
    params = {}
    for k in meta["order"]:
        shape = tuple(meta["shapes"][k])
        count = int(np.prod(shape))
        if off + 8 * count > len(data) - _CRC.size:
            raise ChecksumError(f"{path}: weight block shorter than declared")
        params[k] = np.frombuffer(data, "<f8", count, off).reshape(shape).astype(np.float64)
        off += 8 * count
    if off != len(data) - _CRC.size:
        raise CheckpointError(f"{path}: trailing bytes after weights")
    model = LstmModel(params, meta["hidden"], meta["n_features"], meta["dropout_rate"])
    scaler = Scaler.from_dict(meta["scaler"]) if meta.get("scaler") else None
    return model, scaler, meta.get("extra", {})
