"""Versioned binary model container.

Layout: magic ``CPS1``, u32 version, u32 entry count, then per entry a
length-prefixed UTF-8 name, a kind byte, and a payload. Tensor payloads are
u32 ndim + u32 dims + little-endian float64/int64 data; string payloads are
length-prefixed UTF-8. Save/load round-trips are bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

from .base import DataError

__all__ = ["write_container", "read_container"]

MAGIC = b"CPS1"
VERSION = 1
_KIND_F64 = 1
_KIND_I64 = 2
_KIND_STR = 3


def write_container(entries, path):
    """``entries``: ordered mapping name -> ndarray (float/int) or str."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(entries)))
        for name, value in entries.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)) + encoded)
            if isinstance(value, str):
                payload = value.encode("utf-8")
                fh.write(struct.pack("<B", _KIND_STR))
                fh.write(struct.pack("<I", len(payload)) + payload)
            elif isinstance(value, np.ndarray):
                if value.dtype.kind == "f":
                    kind, dtype = _KIND_F64, "<f8"
                elif value.dtype.kind in "iu":
                    kind, dtype = _KIND_I64, "<i8"
                else:
                    raise DataError(f"entry {name!r}: unsupported dtype {value.dtype}")
                fh.write(struct.pack("<B", kind))
                fh.write(struct.pack("<I", value.ndim))
                for dim in value.shape:
                    fh.write(struct.pack("<I", dim))
                fh.write(np.ascontiguousarray(value).astype(dtype).tobytes())
            else:
                raise DataError(
                    f"entry {name!r}: expected ndarray or str, got {type(value).__name__}"
                )


def read_container(path):
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise DataError(f"{path}: truncated container while reading {what}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise DataError(f"{path}: bad magic; not a CPS1 container")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise DataError(f"{path}: unsupported container version {version}")
    (count,) = struct.unpack("<I", take(4, "entry count"))
    entries = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        kind = take(1, "kind")[0]
        if kind == _KIND_STR:
            (str_len,) = struct.unpack("<I", take(4, "string length"))
            entries[name] = take(str_len, f"string {name!r}").decode("utf-8")
        elif kind in (_KIND_F64, _KIND_I64):
            (ndim,) = struct.unpack("<I", take(4, "ndim"))
            shape = tuple(
                struct.unpack("<I", take(4, "dim"))[0] for _ in range(ndim)
            )
            size = int(np.prod(shape)) if shape else 1
            dtype = "<f8" if kind == _KIND_F64 else "<i8"
            raw = take(size * 8, f"tensor {name!r}")
            entries[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
        else:
            raise DataError(f"{path}: unknown entry kind {kind} for {name!r}")
    if pos != len(data):
        raise DataError(f"{path}: {len(data) - pos} trailing bytes")
    return entries
