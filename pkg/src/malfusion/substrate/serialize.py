"""Binary container for trained models: magic, version, JSON meta, named arrays.

Layout (little-endian):

    4s   magic ``MFC1``
    u32  format version
    u32  byte length of UTF-8 JSON metadata, then the bytes
    u32  array count, then per array:
         u16 name length, name bytes
         u16 dtype string length, dtype bytes (numpy dtype.str)
         u8  ndim, then ndim * u64 dims
         raw C-order array bytes

Arrays round-trip bit-exactly; metadata must be JSON-serializable.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MFC1"
FORMAT_VERSION = 1


class ContainerError(ValueError):
    """Raised on a malformed or foreign model file."""


def save_container(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", FORMAT_VERSION)
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    blob += struct.pack("<I", len(meta_bytes))
    blob += meta_bytes
    blob += struct.pack("<I", len(arrays))
    for name, arr in arrays.items():
        arr = np.asarray(arr, order="C")  # ascontiguousarray would promote 0-d to 1-d
        name_b = name.encode("utf-8")
        dtype_b = arr.dtype.str.encode("ascii")
        blob += struct.pack("<H", len(name_b)) + name_b
        blob += struct.pack("<H", len(dtype_b)) + dtype_b
        blob += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            blob += struct.pack("<Q", dim)
        blob += arr.tobytes()
    Path(path).write_bytes(bytes(blob))


def load_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ContainerError(f"{path}: not a model container (bad magic)")
    off = 4
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != FORMAT_VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    (meta_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    meta = json.loads(raw[off : off + meta_len].decode("utf-8"))
    off += meta_len
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        (dlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        dtype = np.dtype(raw[off : off + dlen].decode("ascii"))
        off += dlen
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}Q", raw, off) if ndim else ()
        off += 8 * ndim
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if shape else dtype.itemsize
        arrays[name] = np.frombuffer(raw[off : off + nbytes], dtype=dtype).reshape(shape).copy()
        off += nbytes
    if off != len(raw):
        raise ContainerError(f"{path}: {len(raw) - off} trailing bytes")
    return meta, arrays
