"""Binary checkpoint format.

Layout, all integers little-endian::

    b"MTWF"  u32 version  u32 tensor_count
    per tensor: u16 name_len, name (utf-8), u8 rank, u32 dims[rank],
                float64 values[prod(dims)]
    footer:     u32 json_len, json (utf-8)

The footer JSON carries the selection-mask fingerprint and AP ids, the
coordinate scaler and the model spec, so a checkpoint is self-describing.
It is written with sorted keys and no whitespace so equal inputs give
byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .params import Parameters

MAGIC = b"MTWF"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(params: Parameters, footer: dict | None = None) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, value in params.items():
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<B", value.ndim))
        out.append(struct.pack(f"<{value.ndim}I", *value.shape))
        out.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    meta = json.dumps(footer or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out.append(struct.pack("<I", len(meta)) + meta)
    return b"".join(out)


def loads(blob: bytes) -> tuple[Parameters, dict]:
    if blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos : pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        values = np.frombuffer(blob, dtype="<f8", count=size, offset=pos)
        pos += 8 * size
        tensors[name] = values.reshape(dims).astype(np.float64)
    (mlen,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    footer = json.loads(blob[pos : pos + mlen].decode("utf-8"))
    if pos + mlen != len(blob):
        raise CheckpointError("trailing bytes after footer")
    return Parameters(tensors), footer


def save(path, params: Parameters, footer: dict | None = None) -> None:
    Path(path).write_bytes(dumps(params, footer))


def load(path) -> tuple[Parameters, dict]:
    return loads(Path(path).read_bytes())
