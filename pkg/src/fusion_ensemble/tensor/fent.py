"""FENT binary tensor container.

Layout: ``b"FENT"``, version byte ``0x01``, dtype byte, u8 rank, ``rank``
little-endian u32 dims, then the row-major little-endian payload.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"FENT"
VERSION = 1
_DTYPE_CODES = {np.dtype("<f4"): 0x01, np.dtype("<f8"): 0x02}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


class FentError(ValueError):
    pass


def dumps(array) -> bytes:
    arr = np.asarray(array)
    dt = arr.dtype.newbyteorder("<")
    if dt not in _DTYPE_CODES:
        raise FentError(f"unsupported dtype {arr.dtype}; FENT stores float32 or float64")
    if arr.ndim > 255:
        raise FentError("rank exceeds 255")
    header = MAGIC + struct.pack("<BBB", VERSION, _DTYPE_CODES[dt], arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=dt).tobytes()


def loads(buf: bytes) -> np.ndarray:
    if len(buf) < 7 or buf[:4] != MAGIC:
        raise FentError("not a FENT buffer (bad magic)")
    version, code, rank = struct.unpack_from("<BBB", buf, 4)
    if version != VERSION:
        raise FentError(f"unsupported FENT version {version}")
    if code not in _CODE_DTYPES:
        raise FentError(f"unknown dtype code 0x{code:02x}")
    dims = struct.unpack_from(f"<{rank}I", buf, 7)
    offset = 7 + 4 * rank
    dtype = _CODE_DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(buf) - offset != expected:
        raise FentError(f"payload is {len(buf) - offset} bytes, header implies {expected}")
    return np.frombuffer(buf, dtype=dtype, offset=offset).reshape(dims).astype(dtype.newbyteorder("="))


def save(path: str | os.PathLike, array) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(array))


def load(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return loads(fh.read())
