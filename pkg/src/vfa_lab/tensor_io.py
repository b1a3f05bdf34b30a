"""Bit-exact binary tensor files (format "VFT1").

Layout: magic 0x56 0x46 0x54 0x31 ("VFT1"), u8 dtype code (0 = float32,
1 = float64), u8 ndim, two reserved zero bytes, ndim little-endian u64
dims, then the payload row-major little-endian. float32 files are widened
to float64 on read; float64 round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"VFT1"

DTYPE_F32 = 0
DTYPE_F64 = 1

_DTYPES = {DTYPE_F32: np.dtype("<f4"), DTYPE_F64: np.dtype("<f8")}


class TensorIOError(Exception):
    """Base class for VFT1 format errors."""


class BadMagicError(TensorIOError):
    pass


class BadDTypeError(TensorIOError):
    pass


class HeaderError(TensorIOError):
    pass


class TruncatedError(TensorIOError):
    pass


def write_matrix(path, m: np.ndarray, dtype_code: int = DTYPE_F64) -> None:
    if dtype_code not in _DTYPES:
        raise BadDTypeError(f"unknown dtype code {dtype_code}")
    a = np.ascontiguousarray(m)
    if a.ndim != 2:
        raise HeaderError(f"only 2-D tensors are written, got ndim={a.ndim}")
    payload = a.astype(_DTYPES[dtype_code], copy=False)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<BBxx", dtype_code, a.ndim))
        f.write(struct.pack("<%dQ" % a.ndim, *a.shape))
        f.write(payload.tobytes(order="C"))


def read_matrix(path) -> np.ndarray:
    """Read a VFT1 file as a float64 matrix."""
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"bad magic in {path}")
    if len(data) < 8:
        raise TruncatedError(f"truncated header in {path}")
    dtype_code, ndim = struct.unpack_from("<BBxx", data, 4)
    if dtype_code not in _DTYPES:
        raise BadDTypeError(f"unknown dtype code {dtype_code} in {path}")
    if data[6:8] != b"\x00\x00":
        raise HeaderError(f"reserved header bytes nonzero in {path}")
    if ndim != 2:
        raise HeaderError(f"expected ndim=2, got {ndim} in {path}")
    header_end = 8 + 8 * ndim
    if len(data) < header_end:
        raise TruncatedError(f"truncated dims in {path}")
    dims = struct.unpack_from("<%dQ" % ndim, data, 8)
    dt = _DTYPES[dtype_code]
    expected = header_end + int(np.prod(dims)) * dt.itemsize
    if len(data) < expected:
        raise TruncatedError(
            f"truncated payload in {path}: have {len(data)}, need {expected}"
        )
    if len(data) > expected:
        raise HeaderError(f"trailing bytes after payload in {path}")
    arr = np.frombuffer(data, dtype=dt, count=int(np.prod(dims)), offset=header_end)
    return arr.reshape(dims).astype(np.float64, copy=True)
