"""Writer for the EMB1 embedding exchange format.

Layout (little-endian): magic ``EMB1`` | format version u32 = 1 |
count u64 | dim u32 | flags u32 (bit 0 = normalized) | count x dim
float32 row-major payload. Ids go to a ``<filename>.ids`` sidecar,
UTF-8, one per LF-terminated line. Files are written atomically
(temp + rename) so consumers never observe partial output.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"EMB1"
FORMAT_VERSION = 1
FLAG_NORMALIZED = 0x1


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_emb1(
    ids: Sequence[str],
    vectors: np.ndarray,
    path: str | Path,
    normalized: bool = True,
) -> None:
    path = Path(path)
    vec = np.ascontiguousarray(vectors, dtype="<f4")
    if vec.ndim != 2:
        raise ValueError(f"vectors must be 2-d, got shape {vec.shape}")
    if len(ids) != vec.shape[0]:
        raise ValueError(f"{len(ids)} ids for {vec.shape[0]} rows")
    seen: set[str] = set()
    for i in ids:
        if not i or "\n" in i or "\r" in i:
            raise ValueError(f"invalid id {i!r}")
        if i in seen:
            raise ValueError(f"duplicate id {i!r}")
        seen.add(i)
    if not np.isfinite(vec).all():
        raise ValueError("vectors contain non-finite values")
    flags = FLAG_NORMALIZED if normalized else 0
    header = MAGIC + struct.pack("<IQII", FORMAT_VERSION, vec.shape[0], vec.shape[1], flags)
    _atomic_write(path, header + vec.tobytes())
    sidecar = "".join(i + "\n" for i in ids).encode("utf-8")
    _atomic_write(path.with_name(path.name + ".ids"), sidecar)


def unit_normalize(vectors: np.ndarray) -> np.ndarray:
    v64 = np.asarray(vectors, dtype=np.float64)
    norms = np.sqrt((v64 ** 2).sum(axis=1, keepdims=True))
    if (norms == 0.0).any():
        raise ValueError("cannot normalize a zero vector")
    return (v64 / norms).astype(np.float32)
