"""Round-trip and error behavior of the .cbin container."""

import struct

import numpy as np
import pytest

from dmsbl import read_cbin, write_cbin
from dmsbl.errors import FormatError


def test_round_trip_quantizes_to_f32(tmp_path):
    rng = np.random.default_rng(7)
    x = rng.standard_normal(33) + 1j * rng.standard_normal(33)
    path = tmp_path / "x.cbin"
    write_cbin(path, x)
    back = read_cbin(path)
    assert back.dtype == np.complex128
    assert back.shape == x.shape
    np.testing.assert_array_equal(back.real, x.real.astype(np.float32))
    np.testing.assert_array_equal(back.imag, x.imag.astype(np.float32))


def test_empty_vector(tmp_path):
    path = tmp_path / "e.cbin"
    write_cbin(path, np.zeros(0, dtype=np.complex128))
    assert read_cbin(path).size == 0


def test_header_layout(tmp_path):
    path = tmp_path / "h.cbin"
    write_cbin(path, np.array([1.0 + 2.0j]))
    raw = path.read_bytes()
    magic, version, length = struct.unpack("<4sIQ", raw[:16])
    assert magic == b"CSIG"
    assert version == 1
    assert length == 1
    re, im = struct.unpack("<ff", raw[16:24])
    assert (re, im) == (1.0, 2.0)
    assert len(raw) == 24


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.cbin"
    path.write_bytes(b"NOPE" + b"\x00" * 12)
    with pytest.raises(FormatError, match="magic"):
        read_cbin(path)


def test_bad_version(tmp_path):
    path = tmp_path / "v.cbin"
    path.write_bytes(struct.pack("<4sIQ", b"CSIG", 9, 0))
    with pytest.raises(FormatError, match="version"):
        read_cbin(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.cbin"
    path.write_bytes(struct.pack("<4sIQ", b"CSIG", 1, 10) + b"\x00" * 8)
    with pytest.raises(FormatError, match="short"):
        read_cbin(path)


def test_rejects_matrix(tmp_path):
    with pytest.raises(FormatError, match="1-D"):
        write_cbin(tmp_path / "m.cbin", np.zeros((2, 2), dtype=complex))
