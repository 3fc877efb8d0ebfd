"""Parser for the IDX binary format used by the MNIST/FashionMNIST distributions.

Layout: a 4-byte big-endian magic number (two zero bytes, a type code,
the number of dimensions), one big-endian uint32 per dimension, then the
payload in row-major order. Only the unsigned-byte type code (0x08) is
supported, which covers every file in the standard distributions.
"""
from __future__ import annotations

import struct

import numpy as np

from ..errors import BadMagicError, DimensionMismatchError, TruncatedPayloadError

_UBYTE_TYPE = 0x08


def parse_idx(data: bytes) -> np.ndarray:
    """Decode an IDX byte string.

    Returns int64 labels for 1-D files (magic 0x00000801) and float32
    images scaled to [0, 1] for files with 2+ dimensions (e.g. magic
    0x00000803 for the 60000x28x28 training images).
    """
    if len(data) < 4:
        raise BadMagicError(f"input too short for an IDX header ({len(data)} bytes)")
    zero, type_code, ndim = data[0] << 8 | data[1], data[2], data[3]
    if zero != 0:
        raise BadMagicError(f"first two magic bytes must be zero, got 0x{zero:04x}")
    if type_code != _UBYTE_TYPE:
        raise BadMagicError(f"unsupported IDX type code 0x{type_code:02x} (only ubyte 0x08)")
    if ndim < 1:
        raise BadMagicError("IDX dimension count must be >= 1")

    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise TruncatedPayloadError(
            f"header declares {ndim} dimensions but only {len(data)} bytes present"
        )
    dims = struct.unpack(f">{ndim}I", data[4:header_len])
    expected = int(np.prod(dims, dtype=np.int64))
    payload = len(data) - header_len
    if payload < expected:
        raise TruncatedPayloadError(
            f"payload has {payload} bytes, dimensions {dims} require {expected}"
        )
    if payload > expected:
        raise DimensionMismatchError(
            f"payload has {payload} bytes, dimensions {dims} require {expected}"
        )

    raw = np.frombuffer(data, dtype=np.uint8, offset=header_len).reshape(dims)
    if ndim == 1:
        return raw.astype(np.int64)
    return raw.astype(np.float32) / 255.0


def load_idx(path) -> np.ndarray:
    """parse_idx on a file path."""
    with open(path, "rb") as fh:
        return parse_idx(fh.read())
