"""Named-tensor container file.

Binary layout (all integers little-endian unsigned 32-bit):

    magic   b"HETN"
    version u32 (currently 1)
    count   u32
    then per tensor, in written order:
        name_len u32, name utf-8 bytes
        ndim     u32, dims u32[ndim]
        payload  float32[prod(dims)], row-major

Arrays are stored float32; loading returns float64 for computation.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ShapeError

__all__ = ["save_tensors", "load_tensors", "MAGIC", "VERSION"]

MAGIC = b"HETN"
VERSION = 1


def save_tensors(path: str | Path, tensors: Mapping[str, np.ndarray]):
    """Write tensors in insertion order."""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        data = np.asarray(arr, dtype=np.float32)
        if not data.flags["C_CONTIGUOUS"]:
            data = np.ascontiguousarray(data)  # preserves 0-d shape, unlike calling it blindly
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<I", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    """Read a container written by :func:`save_tensors`."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ShapeError(f"{path}: not a named-tensor container (bad magic)")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ShapeError(f"{path}: unsupported container version {version}")
    off = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off:off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<I", blob, off)
        off += 4
        dims = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        size = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(blob, dtype="<f4", count=size, offset=off).reshape(dims)
        off += 4 * size
        out[name] = arr.astype(np.float64)
    if off != len(blob):
        raise ShapeError(f"{path}: {len(blob) - off} trailing bytes")
    return out
