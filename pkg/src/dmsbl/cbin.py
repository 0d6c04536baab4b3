"""Reader/writer for the .cbin complex signal container.

Layout (little-endian throughout):

    bytes 0..3   magic "CSIG"
    bytes 4..7   u32 format version (currently 1)
    bytes 8..15  u64 number of complex samples
    then         length x (f32 real, f32 imag) interleaved

The format stores float32 parts regardless of the in-memory dtype, so a
round trip quantizes to single precision.
"""

import struct

import numpy as np

from .errors import FormatError

MAGIC = b"CSIG"
VERSION = 1

_HEADER = struct.Struct("<4sIQ")


def write_cbin(path, x):
    """Write a 1-D complex vector to `path` in .cbin layout."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise FormatError(f"cbin stores 1-D vectors, got shape {x.shape}")
    parts = np.empty(2 * x.size, dtype="<f4")
    parts[0::2] = x.real
    parts[1::2] = x.imag
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, x.size))
        f.write(parts.tobytes())


def read_cbin(path):
    """Read a .cbin file, returning a complex128 vector."""
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, length = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        raw = f.read(8 * length)
        if len(raw) != 8 * length:
            raise FormatError(f"{path}: expected {length} samples, file is short")
    parts = np.frombuffer(raw, dtype="<f4")
    return parts[0::2].astype(np.float64) + 1j * parts[1::2].astype(np.float64)
