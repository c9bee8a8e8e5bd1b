"""Bit-exact named-tensor container.

Layout (all integers little-endian):
  magic "STMW" | u32 version=1 | u32 tensor count
  per tensor: u16 name length | UTF-8 name | u8 dtype code (0 = float32)
              | u8 rank | rank x u64 extents | raw little-endian payload
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Mapping

import numpy as np

from .errors import DataError
from .tensor import Tensor

MAGIC = b"STMW"
VERSION = 1
_DTYPE_CODES = {0: np.dtype("<f4")}


def save_tensors(path, tensors: Mapping[str, Tensor]) -> None:
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", VERSION, len(tensors)))
            for name, t in tensors.items():
                arr = np.ascontiguousarray(t.data if isinstance(t, Tensor) else t, dtype="<f4")
                encoded = name.encode("utf-8")
                fh.write(struct.pack("<H", len(encoded)))
                fh.write(encoded)
                fh.write(struct.pack("<BB", 0, arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
                fh.write(arr.tobytes())
    except OSError as exc:
        raise DataError(f"cannot write checkpoint {path}: {exc}") from exc


def load_tensors(path) -> Dict[str, Tensor]:
    path = Path(path)
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if blob[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    out: Dict[str, Tensor] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        code, rank = struct.unpack_from("<BB", blob, offset)
        offset += 2
        if code not in _DTYPE_CODES:
            raise DataError(f"{path}: unknown dtype code {code} for tensor {name!r}")
        shape = struct.unpack_from(f"<{rank}Q", blob, offset)
        offset += 8 * rank
        dtype = _DTYPE_CODES[code]
        n = int(np.prod(shape)) if rank else 1
        payload = np.frombuffer(blob, dtype=dtype, count=n, offset=offset)
        offset += n * dtype.itemsize
        out[name] = Tensor(payload.reshape(shape).astype(np.float32))
    if offset != len(blob):
        raise DataError(f"{path}: {len(blob) - offset} trailing bytes")
    return out
