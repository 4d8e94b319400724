"""Binary snapshot container for a ComplexField.

Layout (all little-endian)::

    8s   magic "GLFLOW01"
    u32  version
    u8   dim
    u64  N per axis (dim of them)
    f64  h, epsilon, t
    u8   precision (64 -> complex64, 128 -> complex128)
    payload: interleaved (re, im), C order
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .grid import ComplexField, GridSpec

MAGIC = b"GLFLOW01"
VERSION = 1
_DTYPES = {64: np.dtype("<c8"), 128: np.dtype("<c16")}


class SnapshotError(ValueError):
    """Raised for any snapshot that cannot be decoded exactly."""


def encode(field: ComplexField, precision: int = 128) -> bytes:
    if precision not in _DTYPES:
        raise ValueError(f"precision must be 64 or 128, got {precision}")
    g = field.grid
    head = MAGIC + struct.pack("<IB", VERSION, g.dim)
    head += struct.pack(f"<{g.dim}Q", *g.n)
    head += struct.pack("<dddB", g.h, g.epsilon, field.t, precision)
    return head + field.values.astype(_DTYPES[precision]).tobytes(order="C")


def decode(data: bytes) -> ComplexField:
    buf = memoryview(data)

    def take(n, what):
        nonlocal buf
        if len(buf) < n:
            raise SnapshotError(f"truncated snapshot while reading {what}")
        out, buf = bytes(buf[:n]), buf[n:]
        return out

    magic = take(8, "magic")
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    version, dim = struct.unpack("<IB", take(5, "version"))
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    if dim not in (2, 3):
        raise SnapshotError(f"bad dim {dim}")
    n = struct.unpack(f"<{dim}Q", take(8 * dim, "shape"))
    h, eps, t, precision = struct.unpack("<dddB", take(25, "header"))
    if precision not in _DTYPES:
        raise SnapshotError(f"bad precision flag {precision}")
    dtype = _DTYPES[precision]
    nbytes = int(np.prod(n)) * dtype.itemsize
    payload = take(nbytes, "payload")
    if len(buf):
        raise SnapshotError(f"{len(buf)} trailing bytes after payload")
    values = np.frombuffer(payload, dtype=dtype).reshape(n).astype(np.complex128)
    try:
        grid = GridSpec(dim=dim, n=tuple(n), h=h, epsilon=eps)
    except ValueError as exc:
        raise SnapshotError(f"invalid grid in header: {exc}") from exc
    return ComplexField(grid, values, t)


def write_snapshot(field: ComplexField, sink: str | Path | BinaryIO, precision: int = 128) -> None:
    data = encode(field, precision)
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(data)
    else:
        sink.write(data)


def read_snapshot(source: str | Path | BinaryIO | bytes) -> ComplexField:
    if isinstance(source, (bytes, bytearray)):
        return decode(bytes(source))
    if isinstance(source, (str, Path)):
        return decode(Path(source).read_bytes())
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        return decode(source.read())
    raise TypeError(f"cannot read snapshot from {type(source).__name__}")
