"""GOALT1 tensor files: ASCII magic, a shape line, raw little-endian float32."""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import ParseError

MAGIC = b"GOALT1\n"


def save_tensor(path: str | os.PathLike, array: np.ndarray) -> None:
    arr = np.asarray(array, dtype="<f4")
    header = " ".join(str(v) for v in (arr.ndim, *arr.shape)).encode("ascii") + b"\n"
    Path(path).write_bytes(MAGIC + header + arr.tobytes(order="C"))


def load_tensor(path: str | os.PathLike) -> np.ndarray:
    """Read a GOALT1 file into a float32 array of the recorded shape."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ParseError(f"{path}: missing GOALT1 magic")
    end = raw.find(b"\n", len(MAGIC))
    if end < 0:
        raise ParseError(f"{path}: truncated header")
    try:
        fields = [int(v) for v in raw[len(MAGIC):end].split()]
    except ValueError as exc:
        raise ParseError(f"{path}: malformed shape line") from exc
    if not fields or fields[0] != len(fields) - 1 or any(d < 0 for d in fields):
        raise ParseError(f"{path}: shape line {fields} is inconsistent")
    shape = tuple(fields[1:])
    body = raw[end + 1:]
    expected = 4 * int(np.prod(shape, dtype=np.int64))
    if len(body) != expected:
        raise ParseError(f"{path}: expected {expected} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(shape).astype(np.float32)
