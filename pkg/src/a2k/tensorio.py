"""Reading and writing the A2KT tensor file format (version 1).

Layout, all little-endian::

    magic    4 bytes   b"A2KT" (float32 payload) or b"A2KI" (int64 payload)
    version  u8        1
    rank     u8
    reserved u16       0
    dims     rank x u32
    payload  prod(dims) values, row-major
"""

from __future__ import annotations

import hashlib
import math
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

FLOAT_MAGIC = b"A2KT"
INT_MAGIC = b"A2KI"
VERSION = 1
_HEADER = struct.Struct("<4sBBH")


def encode(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if np.issubdtype(array.dtype, np.integer):
        magic, payload = INT_MAGIC, array.astype("<i8")
    elif np.issubdtype(array.dtype, np.floating):
        magic, payload = FLOAT_MAGIC, array.astype("<f4")
    else:
        raise FormatError(f"cannot encode dtype {array.dtype}")
    if array.ndim > 255:
        raise FormatError("rank exceeds 255")
    if any(d > 0xFFFFFFFF for d in array.shape):
        raise FormatError("dimension exceeds u32 range")
    header = _HEADER.pack(magic, VERSION, array.ndim, 0)
    dims = struct.pack(f"<{array.ndim}I", *array.shape)
    return header + dims + np.ascontiguousarray(payload).tobytes()


def decode(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, rank, reserved = _HEADER.unpack_from(data, 0)
    if magic == FLOAT_MAGIC:
        dtype = np.dtype("<f4")
    elif magic == INT_MAGIC:
        dtype = np.dtype("<i8")
    else:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if reserved != 0:
        raise FormatError("reserved header field must be zero")
    offset = _HEADER.size
    if len(data) < offset + 4 * rank:
        raise FormatError("truncated dimension table")
    dims = struct.unpack_from(f"<{rank}I", data, offset)
    offset += 4 * rank
    count = math.prod(dims)
    expected = offset + count * dtype.itemsize
    if len(data) != expected:
        raise FormatError(f"payload is {len(data) - offset} bytes, expected {count * dtype.itemsize}")
    values = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    native = np.float32 if magic == FLOAT_MAGIC else np.int64
    return values.astype(native).reshape(dims)


def save(path, array: np.ndarray) -> None:
    Path(path).write_bytes(encode(array))


def load(path) -> np.ndarray:
    return decode(Path(path).read_bytes())


def checksum(array: np.ndarray) -> str:
    """SHA-256 of the encoded tensor; identical arrays give identical digests."""
    return hashlib.sha256(encode(array)).hexdigest()
