import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from tgbformer import tzr
from tgbformer.errors import TzrError


def test_layout():
    blob = tzr.dumps(np.arange(6.0).reshape(2, 3))
    header, payload = blob.split(b"\n", 1)
    assert header == b'{"dtype":"f64","shape":[2,3]}'
    assert payload == np.arange(6.0).astype("<f8").tobytes()


@given(arrays(np.float64, array_shapes(min_dims=0, max_dims=4, min_side=0, max_side=4),
              elements=st.floats(allow_nan=True, allow_infinity=True)))
def test_round_trip_is_bit_exact(arr):
    back = tzr.loads(tzr.dumps(arr))
    assert back.shape == arr.shape
    assert back.tobytes() == np.ascontiguousarray(arr).tobytes()


def test_file_round_trip_and_checksum(tmp_path, rng):
    arr = rng.normal(size=(4, 5)).T
    tzr.save(tmp_path / "a.tzr", arr)
    assert np.array_equal(tzr.load(tmp_path / "a.tzr"), arr)
    assert tzr.checksum(arr) == tzr.checksum(tzr.load(tmp_path / "a.tzr"))
    assert tzr.checksum(arr) != tzr.checksum(np.nextafter(arr, np.inf))


@pytest.mark.parametrize("blob", [
    b"no newline",
    b"not json\n",
    b'{"dtype":"f32","shape":[1]}\n\x00\x00\x00\x00',
    b'{"dtype":"f64","shape":[-1]}\n',
    b'{"dtype":"f64","shape":[2]}\n' + b"\x00" * 8,
])
def test_malformed(blob):
    with pytest.raises(TzrError):
        tzr.loads(blob)


def test_missing_file(tmp_path):
    with pytest.raises(TzrError):
        tzr.load(tmp_path / "absent.tzr")
    with pytest.raises(OSError):
        tzr.load(tmp_path / "absent.tzr")
