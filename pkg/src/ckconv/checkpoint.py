"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic      8 bytes   b"CKCVCKPT"
    version    u32
    text_len   u64, then text_len bytes of UTF-8 (config echo + '#' metadata lines)
    n_tensors  u32
    per tensor:
        name_len u32, name bytes
        ndim     u32, dims u64 * ndim
        data     float64 '<f8' * prod(dims)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CKCVCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, text: str, tensors: dict[str, np.ndarray]) -> None:
    body = bytearray()
    body += MAGIC
    body += struct.pack("<I", VERSION)
    raw = text.encode("utf-8")
    body += struct.pack("<Q", len(raw)) + raw
    body += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")  # tobytes() emits C order; ascontiguousarray would promote 0-d
        nb = name.encode("utf-8")
        body += struct.pack("<I", len(nb)) + nb
        body += struct.pack("<I", arr.ndim)
        body += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        body += arr.tobytes()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(bytes(body))
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[str, dict[str, np.ndarray]]:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    pos = 0

    def read(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = struct.unpack_from(fmt, buf, pos)
        pos += size
        return out

    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    pos = 8
    (version,) = read("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (text_len,) = read("<Q")
    text = buf[pos:pos + text_len].decode("utf-8")
    pos += text_len
    (count,) = read("<I")
    tensors = {}
    for _ in range(count):
        (nlen,) = read("<I")
        name = buf[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = read("<I")
        shape = read(f"<{ndim}Q") if ndim else ()
        n = int(np.prod(shape)) if shape else 1
        if pos + 8 * n > len(buf):
            raise CheckpointError(f"{path}: truncated tensor {name!r}")
        tensors[name] = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes")
    return text, tensors
