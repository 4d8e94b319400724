"""Checkpoint files.

Layout: magic ``GLCKPT01``, u32 version, u32 length + UTF-8 JSON state,
u64 length + embedded field snapshot, u64 length + pickled diagnostic
state, then a CRC32 of everything before it. Diagnostic state is pickled,
so only load checkpoints you wrote yourself.
"""

from __future__ import annotations

import json
import pickle
import struct
import zlib
from pathlib import Path

from ..snapshot import decode, encode

MAGIC = b"GLCKPT01"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(state: dict, field, diagnostics) -> bytes:
    js = json.dumps(state, sort_keys=True).encode()
    snap = encode(field, 128)
    blob = pickle.dumps(diagnostics, protocol=4)
    body = b"".join([MAGIC, struct.pack("<II", VERSION, len(js)), js,
                     struct.pack("<Q", len(snap)), snap, struct.pack("<Q", len(blob)), blob])
    return body + struct.pack("<I", zlib.crc32(body))


def loads(data: bytes):
    if len(data) < len(MAGIC) + 12 or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint corrupted (CRC mismatch)")
    pos = len(MAGIC)
    version, n = struct.unpack_from("<II", body, pos)
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version}, this build reads {VERSION}")
    pos += 8
    state = json.loads(body[pos:pos + n])
    pos += n
    (n,) = struct.unpack_from("<Q", body, pos)
    pos += 8
    field = decode(body[pos:pos + n])
    pos += n
    (n,) = struct.unpack_from("<Q", body, pos)
    pos += 8
    diagnostics = pickle.loads(body[pos:pos + n])
    if pos + n != len(body):
        raise CheckpointError("trailing bytes in checkpoint")
    return state, field, diagnostics


def write(path, state: dict, field, diagnostics) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(state, field, diagnostics))
    tmp.replace(path)


def read(path):
    return loads(Path(path).read_bytes())
