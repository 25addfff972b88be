import struct

import numpy as np
import pytest

from a2k import tensorio
from a2k.errors import FormatError


def test_float_layout_is_exact():
    x = np.arange(6, dtype=np.float32).reshape(2, 3)
    raw = tensorio.encode(x)
    assert raw[:4] == b"A2KT"
    assert raw[4:8] == bytes([1, 2, 0, 0])
    assert struct.unpack("<2I", raw[8:16]) == (2, 3)
    assert raw[16:] == x.astype("<f4").tobytes()


def test_int_layout_uses_i64():
    idx = np.array([[0, 3, 2]], dtype=np.int64)
    raw = tensorio.encode(idx)
    assert raw[:4] == b"A2KI"
    assert len(raw) == 8 + 2 * 4 + 3 * 8
    back = tensorio.decode(raw)
    assert back.dtype == np.int64
    np.testing.assert_array_equal(back, idx)


def test_round_trip(tmp_path, rng):
    x = rng.standard_normal((2, 3, 4, 5)).astype(np.float32)
    tensorio.save(tmp_path / "x.a2kt", x)
    np.testing.assert_array_equal(tensorio.load(tmp_path / "x.a2kt"), x)


def test_scalar_rank_zero():
    back = tensorio.decode(tensorio.encode(np.float32(2.5)))
    assert back.shape == () and back == 2.5


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b"XXXX" + b[4:],
        lambda b: b[:4] + bytes([2]) + b[5:],
        lambda b: b[:6] + b"\x01\x00" + b[8:],
        lambda b: b[:-1],
        lambda b: b + b"\x00",
        lambda b: b[:5],
    ],
    ids=["magic", "version", "reserved", "short-payload", "long-payload", "short-header"],
)
def test_corrupt_files_raise(mutate):
    good = tensorio.encode(np.ones((2, 2), np.float32))
    with pytest.raises(FormatError):
        tensorio.decode(mutate(good))


def test_checksum_tracks_content():
    a = np.zeros((2, 2), np.float32)
    b = a.copy()
    b[0, 0] = 1
    assert tensorio.checksum(a) == tensorio.checksum(a.copy())
    assert tensorio.checksum(a) != tensorio.checksum(b)
