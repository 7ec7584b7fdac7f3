"""TSR: the little-endian binary tensor file used for feature maps and checkpoints.

Layout::

    magic  b"ACIT"          4 bytes
    version u8 = 1
    dtype   u8  0=f32 1=f64
    rank    u8
    reserved u8 = 0
    dims    rank x u32
    payload row-major, little-endian
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"ACIT"
VERSION = 1
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class FormatError(ValueError):
    def __init__(self, message: str, offset: int, path=None):
        where = f"{path}: " if path is not None else ""
        super().__init__(f"{where}{message} (byte offset {offset})")
        self.offset = offset
        self.path = path


def encode(array) -> bytes:
    arr = np.asarray(array)
    if arr.dtype not in _CODES:
        raise TypeError(f"TSR stores f32 or f64, got {arr.dtype}")
    code = _CODES[arr.dtype]
    header = MAGIC + struct.pack("<BBBB", VERSION, code, arr.ndim, 0)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()


def decode(buf: bytes, path=None) -> np.ndarray:
    if len(buf) < 8:
        raise FormatError("truncated header", len(buf), path)
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}", 0, path)
    version, code, rank, reserved = struct.unpack_from("<BBBB", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4, path)
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}", 5, path)
    if reserved != 0:
        raise FormatError("reserved byte is not zero", 7, path)
    end_dims = 8 + 4 * rank
    if len(buf) < end_dims:
        raise FormatError("truncated dimension table", len(buf), path)
    dims = struct.unpack_from(f"<{rank}I", buf, 8)
    dtype = _DTYPES[code]
    expected = end_dims + int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(buf) != expected:
        raise FormatError(f"payload size mismatch: expected {expected} bytes total, got {len(buf)}",
                          min(len(buf), expected), path)
    arr = np.frombuffer(buf, dtype=dtype, offset=end_dims).reshape(dims)
    return arr.astype(dtype.newbyteorder("="))


def write(path, array) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(array))


def read(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode(fh.read(), path=os.fspath(path))
