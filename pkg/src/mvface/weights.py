"""Flat binary container for named float32 arrays.

Layout (little-endian)::

    b"MVFW" | version u16 | count u32 |
    count x ( name_len u16 | name utf-8 | rank u8 | extents u32 * rank | f32 values )
"""
from __future__ import annotations

import io
import os
import struct

import numpy as np

MAGIC = b"MVFW"
VERSION = 1


class WeightFormatError(ValueError):
    pass


class MissingWeightError(KeyError):
    pass


def pack_weights(arrays: dict) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HI", VERSION, len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr).tobytes())
    return buf.getvalue()


def unpack_weights(data: bytes) -> dict:
    view = memoryview(data)
    if bytes(view[:4]) != MAGIC:
        raise WeightFormatError("not a weight container (bad magic)")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(view):
            raise WeightFormatError("truncated weight container")
        out = struct.unpack_from(fmt, view, pos)
        pos += size
        return out

    version, count = take("<HI")
    if version != VERSION:
        raise WeightFormatError(f"unsupported container version {version}")
    arrays = {}
    for _ in range(count):
        (name_len,) = take("<H")
        name = bytes(take(f"<{name_len}s")[0]).decode("utf-8")
        (rank,) = take("<B")
        shape = take(f"<{rank}I") if rank else ()
        n = int(np.prod(shape)) if rank else 1
        if pos + 4 * n > len(view):
            raise WeightFormatError(f"truncated values for {name!r}")
        values = np.frombuffer(view, dtype="<f4", count=n, offset=pos)
        pos += 4 * n
        arrays[name] = values.astype(np.float32).reshape(shape)
    if pos != len(view):
        raise WeightFormatError(f"{len(view) - pos} trailing bytes after the last entry")
    return arrays


def save_weights(path, arrays: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(pack_weights(arrays))


def load_weights(path) -> dict:
    with open(os.fspath(path), "rb") as fh:
        return unpack_weights(fh.read())


def require(arrays: dict, name: str, shape=None) -> np.ndarray:
    """Fetch ``name`` from a loaded container, checking its shape if given."""
    if name not in arrays:
        raise MissingWeightError(f"weight container has no entry {name!r}")
    arr = arrays[name]
    if shape is not None and tuple(arr.shape) != tuple(shape):
        raise WeightFormatError(f"{name!r} has shape {arr.shape}, expected {tuple(shape)}")
    return arr
