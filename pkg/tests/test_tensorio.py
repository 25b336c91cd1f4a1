import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.extra.numpy import array_shapes, arrays

from goalflow.errors import ParseError
from goalflow.tensorio import load_tensor, save_tensor


def test_layout_is_magic_shape_line_then_le_float32(tmp_path):
    a = np.arange(6, dtype=np.float32).reshape(2, 3)
    save_tensor(tmp_path / "a.goalt", a)
    raw = (tmp_path / "a.goalt").read_bytes()
    assert raw.startswith(b"GOALT1\n2 2 3\n")
    assert raw[len(b"GOALT1\n2 2 3\n"):] == a.astype("<f4").tobytes()


@settings(max_examples=40, deadline=None)
@given(arrays(np.float32, array_shapes(min_dims=0, max_dims=4, max_side=5)))
def test_roundtrip(tmp_path_factory, a):
    path = tmp_path_factory.mktemp("t") / "x.goalt"
    save_tensor(path, a)
    b = load_tensor(path)
    assert b.shape == a.shape and b.dtype == np.float32
    assert np.array_equal(b, a, equal_nan=True)


@pytest.mark.parametrize("blob", [
    b"GOALT2\n1 1\n\x00\x00\x00\x00",
    b"GOALT1\n",
    b"GOALT1\n2 2\n\x00\x00\x00\x00",
    b"GOALT1\n1 x\n\x00\x00\x00\x00",
    b"GOALT1\n1 2\n\x00\x00\x00\x00",
    b"GOALT1\n1 -1\n",
])
def test_malformed_files(tmp_path, blob):
    (tmp_path / "bad.goalt").write_bytes(blob)
    with pytest.raises(ParseError):
        load_tensor(tmp_path / "bad.goalt")
