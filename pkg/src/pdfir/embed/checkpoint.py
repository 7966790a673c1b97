"""``POV1`` container: metadata plus named little-endian float32 tensors.

Layout::

    b"POV1"
    u32 metadata length, metadata as UTF-8 JSON (sorted keys)
    u32 tensor count
    per tensor: u16 name length, name, u8 ndim, u32 * ndim shape
    tensor data in directory order, float32 little-endian
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"POV1"

__all__ = ["MAGIC", "CheckpointError", "dumps_checkpoint", "loads_checkpoint",
           "save_checkpoint", "load_checkpoint", "config_hash"]


class CheckpointError(ValueError):
    pass


def config_hash(params: Mapping) -> str:
    text = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def dumps_checkpoint(metadata: Mapping, tensors: Mapping[str, np.ndarray]) -> bytes:
    meta = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode()
    out = bytearray(MAGIC)
    out += struct.pack("<I", len(meta)) + meta
    out += struct.pack("<I", len(tensors))
    arrays = []
    for name, value in tensors.items():
        arr = np.ascontiguousarray(np.asarray(value, dtype="<f4"))
        raw_name = name.encode()
        out += struct.pack("<H", len(raw_name)) + raw_name
        out += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        arrays.append(arr)
    for arr in arrays:
        out += arr.tobytes()
    return bytes(out)


def loads_checkpoint(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if data[:4] != MAGIC:
        raise CheckpointError("not a POV1 checkpoint")
    try:
        pos = 4
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        metadata = json.loads(data[pos:pos + n].decode())
        pos += n
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        directory = []
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + name_len].decode()
            pos += name_len
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            directory.append((name, shape))
        tensors = {}
        for name, shape in directory:
            size = int(np.prod(shape)) if shape else 1
            end = pos + 4 * size
            if end > len(data):
                raise CheckpointError(f"tensor {name!r} is truncated")
            tensors[name] = np.frombuffer(data[pos:end], dtype="<f4").reshape(shape).copy()
            pos = end
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from None
    if pos != len(data):
        raise CheckpointError("trailing bytes after tensor data")
    return metadata, tensors


def save_checkpoint(path: str | Path, metadata: Mapping, tensors: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps_checkpoint(metadata, tensors))


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    return loads_checkpoint(Path(path).read_bytes())
