"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"QASPR\\x01"
    u32 length + UTF-8 JSON metadata
    u32 tensor count
    per tensor: u32 name length + UTF-8 name, u32 rank, rank x u64 dims,
                float64 payload (row-major)
"""

from __future__ import annotations

import json
import struct
from typing import Mapping

import numpy as np

MAGIC = b"QASPR\x01"


class CheckpointError(ValueError):
    pass


def dumps(params: Mapping[str, np.ndarray], meta: Mapping) -> bytes:
    out = [MAGIC]
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    out.append(struct.pack("<I", len(blob)))
    out.append(blob)
    out.append(struct.pack("<I", len(params)))
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        enc = name.encode("utf-8")
        out.append(struct.pack("<I", len(enc)))
        out.append(enc)
        out.append(struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def loads(data: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if not data.startswith(MAGIC):
        raise CheckpointError("bad magic bytes; not a checkpoint")
    pos = len(MAGIC)

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError("truncated checkpoint")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    (n,) = struct.unpack("<I", take(4))
    meta = json.loads(take(n).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    params = {}
    for _ in range(count):
        (n,) = struct.unpack("<I", take(4))
        name = take(n).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        size = int(np.prod(shape)) if rank else 1
        params[name] = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(data):
        raise CheckpointError("trailing bytes after last tensor")
    return params, meta


def expected_shapes(meta: Mapping) -> dict[str, tuple[int, ...]]:
    d, R = meta["d"], meta["relation_count"]
    cfg = meta.get("config", {})
    shapes = {
        "rel_emb": (R, d),
        "query_transform": (d, 2 * d) if cfg.get("shared_transform") else (R, d, 2 * d),
        "score_vec": (d,),
    }
    if cfg.get("separate_scorers"):
        shapes["semantic_vec"] = (d,)
    return shapes


def save(path, params: Mapping[str, np.ndarray], meta: Mapping) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(params, meta))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        params, meta = loads(fh.read())
    want = expected_shapes(meta)
    got = {k: v.shape for k, v in params.items()}
    if got != want:
        raise CheckpointError(f"tensor shapes {got} do not match config {want}")
    return params, meta
