"""Versioned binary weight container.

Layout (all integers little-endian):

    bytes 0-3   magic b"TFOK"
    u32         format version (currently 1)
    u32         record count
    per record:
        u16     name length in bytes
        bytes   utf-8 name
        u8      dtype code (0 = float32, 1 = float64)
        u8      rank
        u32*r   dimensions
        bytes   raw little-endian payload (C order)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = ["save_checkpoint", "load_checkpoint", "MAGIC", "FORMAT_VERSION"]

MAGIC = b"TFOK"
FORMAT_VERSION = 1

_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def save_checkpoint(path, arrays: dict[str, np.ndarray]) -> None:
    """Write named arrays in a stable (insertion) order."""
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dt = arr.dtype.newbyteorder("<")
        if dt not in _DTYPE_CODES:
            raise ValueError(f"checkpoint: unsupported dtype {arr.dtype} for record {name!r}")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<BB", _DTYPE_CODES[dt], arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype(dt, copy=False).tobytes(order="C"))
    path.write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"checkpoint: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"checkpoint: unsupported format version {version}")
    offset = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset:offset + nlen].decode("utf-8")
        offset += nlen
        code, rank = struct.unpack_from("<BB", raw, offset)
        offset += 2
        shape = struct.unpack_from(f"<{rank}I", raw, offset)
        offset += 4 * rank
        dt = _CODE_DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize if rank else dt.itemsize
        payload = raw[offset:offset + nbytes]
        if len(payload) != nbytes:
            raise ValueError(f"checkpoint: truncated payload for record {name!r}")
        offset += nbytes
        out[name] = np.frombuffer(payload, dtype=dt).reshape(shape).copy()
    return out
