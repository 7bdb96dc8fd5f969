"""Binary tensor blobs.

Layout, all little-endian:

    bytes 0..3    magic b"CSSF"
    bytes 4..5    format version, u16 (currently 1)
    bytes 6..7    rank, u16
    then          rank dimension sizes, u64 each
    then          row-major float64 payload

Load errors name the byte offset at which the file fell short, so a
truncated checkpoint is distinguishable from a corrupt header.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"CSSF"
VERSION = 1

__all__ = ["MAGIC", "VERSION", "save_tensor", "load_tensor"]


def save_tensor(path: str | Path, array: np.ndarray) -> None:
    arr = np.asarray(array, dtype=np.float64)
    if not arr.flags["C_CONTIGUOUS"]:  # ascontiguousarray widens 0-d to 1-d
        arr = np.ascontiguousarray(arr)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HH", VERSION, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.astype("<f8", copy=False).tobytes())


def load_tensor(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()

    def take(n: int, offset: int, what: str) -> bytes:
        if len(blob) < offset + n:
            raise DataError(
                f"{path}: truncated while reading {what}: "
                f"need byte {offset + n}, file has {len(blob)}"
            )
        return blob[offset : offset + n]

    if take(4, 0, "magic") != MAGIC:
        raise DataError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, rank = struct.unpack("<HH", take(4, 4, "header"))
    if version != VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    shape = struct.unpack(f"<{rank}Q", take(8 * rank, 8, "dimensions")) if rank else ()
    count = 1
    for d in shape:
        count *= d
    payload = take(8 * count, 8 + 8 * rank, "payload")
    extra = len(blob) - (8 + 8 * rank + 8 * count)
    if extra:
        raise DataError(f"{path}: {extra} trailing bytes after payload")
    # astype copies out of the read-only buffer and is already C-contiguous;
    # ascontiguousarray is avoided because it widens 0-d arrays to 1-d
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
