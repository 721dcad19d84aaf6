"""Binary checkpoint format.

Layout (little-endian):
  magic   4 bytes  b"AMBA"
  version u32      1
  count   u32      number of tensors
  per tensor:
    name_len u16, name utf-8, rank u8, dims rank * u64, data float32
  config_len u32, config utf-8 text

Tensors are stored in file order; save preserves dict insertion order so
identical parameter dicts serialize to byte-identical files.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import ContractError

MAGIC = b"AMBA"
VERSION = 1


def encode_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ContractError(
                f"truncated checkpoint: needed {n} bytes at offset {self.pos}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_tensors(blob: bytes) -> tuple[dict[str, np.ndarray], "_Reader"]:
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise ContractError("not a checkpoint: bad magic")
    version, count = r.unpack("<II")
    if version != VERSION:
        raise ContractError(f"unsupported checkpoint version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("<B")
        shape = r.unpack(f"<{rank}Q")
        size = int(np.prod(shape, dtype=np.int64)) if rank else 1
        data = np.frombuffer(r.take(4 * size), dtype="<f4")
        if name in tensors:
            raise ContractError(f"duplicate tensor {name!r} in checkpoint")
        tensors[name] = data.astype(np.float64).reshape(shape)
    return tensors, r


def save_checkpoint(path, tensors: dict[str, np.ndarray], config_text: str) -> None:
    raw = config_text.encode("utf-8")
    blob = encode_tensors(tensors) + struct.pack("<I", len(raw)) + raw
    with open(path, "wb") as fh:
        fh.write(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], str]:
    """Returns (tensors as float64 arrays, config text)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    tensors, r = decode_tensors(blob)
    (cfg_len,) = r.unpack("<I")
    config_text = r.take(cfg_len).decode("utf-8")
    if r.pos != len(blob):
        raise ContractError(f"{len(blob) - r.pos} trailing bytes after checkpoint")
    return tensors, config_text
