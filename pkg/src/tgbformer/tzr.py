"""TZR tensor files: one JSON header line, then little-endian float64 payload.

Layout::

    {"dtype":"f64","shape":[2,3]}\\n
    <2*3*8 bytes, row-major, IEEE-754 little-endian>
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .errors import TzrError

_DTYPE = np.dtype("<f8")


def dumps(array) -> bytes:
    arr = np.asarray(array, dtype=np.float64)
    header = json.dumps({"dtype": "f64", "shape": list(arr.shape)}, separators=(",", ":"))
    return header.encode("utf-8") + b"\n" + arr.astype(_DTYPE, copy=False).tobytes(order="C")


def loads(blob: bytes) -> np.ndarray:
    newline = blob.find(b"\n")
    if newline < 0:
        raise TzrError("missing header line")
    try:
        header = json.loads(blob[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TzrError(f"bad header: {exc}") from None
    if not isinstance(header, dict) or header.get("dtype") != "f64":
        raise TzrError(f"unsupported header {header!r}; expected dtype f64")
    shape = header.get("shape")
    if not isinstance(shape, list) or not all(isinstance(n, int) and n >= 0 for n in shape):
        raise TzrError(f"bad shape {shape!r}")
    payload = blob[newline + 1:]
    expected = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
    if len(payload) != expected:
        raise TzrError(f"payload has {len(payload)} bytes, shape {shape} needs {expected}")
    return np.frombuffer(payload, dtype=_DTYPE).astype(np.float64).reshape(tuple(shape))


def save(path: str | os.PathLike, array) -> None:
    try:
        Path(path).write_bytes(dumps(array))
    except OSError as exc:
        raise TzrError(f"cannot write {path}: {exc}") from None


def load(path: str | os.PathLike) -> np.ndarray:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise TzrError(f"cannot read {path}: {exc}") from None
    return loads(blob)


def checksum(array) -> str:
    """sha256 of the TZR encoding; equal checksums mean bit-identical tensors."""
    return hashlib.sha256(dumps(array)).hexdigest()
