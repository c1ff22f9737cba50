"""Little-endian binary tensor files.

Layout: ``b"RTSR"``, version byte, dtype code byte, ndim byte, one reserved
byte, ``ndim`` uint32 dims, then the row-major payload.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"RTSR"
VERSION = 1
DTYPE_CODES = {0: np.dtype("u1"), 1: np.dtype("i1"), 2: np.dtype("<i4"), 3: np.dtype("<f4")}
CODE_FOR = {(dt.kind, dt.itemsize): code for code, dt in DTYPE_CODES.items()}


class TensorFormatError(ValueError):
    pass


def encode_tensor(array) -> bytes:
    a = np.asarray(array)
    key = (a.dtype.kind, a.dtype.itemsize)
    if key not in CODE_FOR:
        raise TensorFormatError(f"unsupported dtype {a.dtype}; use u8, i8, i32 or f32")
    code = CODE_FOR[key]
    if a.ndim > 255:
        raise TensorFormatError("too many dimensions")
    header = MAGIC + struct.pack("<BBBB", VERSION, code, a.ndim, 0)
    header += struct.pack(f"<{a.ndim}I", *a.shape)
    payload = np.ascontiguousarray(a, dtype=DTYPE_CODES[code]).tobytes()
    return header + payload


def decode_tensor(data: bytes) -> np.ndarray:
    if len(data) < 8 or data[:4] != MAGIC:
        raise TensorFormatError("not a tensor file (bad magic)")
    version, code, ndim, _ = struct.unpack_from("<BBBB", data, 4)
    if version != VERSION:
        raise TensorFormatError(f"unsupported tensor format version {version}")
    if code not in DTYPE_CODES:
        raise TensorFormatError(f"unknown dtype code {code}")
    off = 8 + 4 * ndim
    if len(data) < off:
        raise TensorFormatError("truncated header")
    dims = struct.unpack_from(f"<{ndim}I", data, 8)
    dtype = DTYPE_CODES[code]
    count = int(np.prod(dims, dtype=np.int64))
    if len(data) != off + count * dtype.itemsize:
        raise TensorFormatError(f"payload size {len(data) - off} does not match dims {dims}")
    return np.frombuffer(data, dtype=dtype, count=count, offset=off).reshape(dims).copy()


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_tensor(path, array) -> None:
    atomic_write(path, encode_tensor(array))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_tensor(fh.read())
