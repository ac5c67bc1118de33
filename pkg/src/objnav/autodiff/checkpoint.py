"""Flat binary parameter container.

Layout (all integers little-endian uint32)::

    b"ONL1" | version | count
    repeated count times:
        name_len | name (utf-8) | rank | dims[rank] | float64 values (little-endian)
"""
from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from ..errors import ContractError
from .params import ParameterSet

MAGIC = b"ONL1"
VERSION = 1


def dumps(state: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(state)))
    for name, value in state.items():
        raw = name.encode("utf-8")
        value = np.asarray(value, dtype="<f8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", value.ndim))
        buf.write(struct.pack(f"<{value.ndim}I", *value.shape))
        buf.write(np.ascontiguousarray(value).tobytes())
    return buf.getvalue()


def loads(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise ContractError("not an ONL1 parameter container")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ContractError(f"unsupported container version {version}")
    pos = 12
    state = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + n].decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        state[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(dims).copy()
        pos += 8 * size
    if pos != len(blob):
        raise ContractError("trailing bytes after parameter records")
    return state


def save(params: ParameterSet | dict, path) -> None:
    state = params.state() if isinstance(params, ParameterSet) else params
    Path(path).write_bytes(dumps(state))


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
