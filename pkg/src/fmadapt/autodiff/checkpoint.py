"""Binary parameter container.

Layout (all integers little-endian)::

    b"FMADAPT1"
    u64   parameter count
    per parameter:
      u32  name length, then UTF-8 name bytes
      u8   dtype tag (0 = float64, 1 = float32, 2 = int64)
      u32  rank, then rank x u64 extents
      raw little-endian values, row-major
"""

from __future__ import annotations

import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np

MAGIC = b"FMADAPT1"
_TAGS = {0: np.dtype("<f8"), 1: np.dtype("<f4"), 2: np.dtype("<i8")}
_TAG_OF = {"f8": 0, "f4": 1, "i8": 2}


class CheckpointError(ValueError):
    pass


def dumps(arrays: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<Q", len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        tag = _TAG_OF.get(f"{arr.dtype.kind}{arr.dtype.itemsize}")
        if tag is None:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<BI", tag, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_TAGS[tag]).tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> dict[str, np.ndarray]:
    if buf[:8] != MAGIC:
        raise CheckpointError("bad magic; not an FMADAPT1 checkpoint")
    pos = 8
    (count,) = struct.unpack_from("<Q", buf, pos)
    pos += 8
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = buf[pos:pos + nlen].decode("utf-8")
        pos += nlen
        tag, rank = struct.unpack_from("<BI", buf, pos)
        pos += 5
        if tag not in _TAGS:
            raise CheckpointError(f"{name}: unknown dtype tag {tag}")
        shape = struct.unpack_from(f"<{rank}Q", buf, pos)
        pos += 8 * rank
        dt = _TAGS[tag]
        n = int(np.prod(shape)) if rank else 1
        nbytes = n * dt.itemsize
        if pos + nbytes > len(buf):
            raise CheckpointError(f"{name}: truncated payload")
        arr = np.frombuffer(buf, dtype=dt, count=n, offset=pos).reshape(shape)
        out[name] = arr.astype(dt.newbyteorder("="), copy=True)
        pos += nbytes
    if pos != len(buf):
        raise CheckpointError("trailing bytes after last parameter")
    return out


def save(path: str | Path, arrays: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(arrays))


def load(path: str | Path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
