"""Raw tensor file format: "TNSR" magic, u32 ndim, u32 dims, f32le payload."""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"TNSR"


def write_tensor(path, arr) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic, not a TNSR file")
    (ndim,) = struct.unpack_from("<I", data, 4)
    dims = struct.unpack_from(f"<{ndim}I", data, 8)
    count = int(np.prod(dims)) if ndim else 1
    offset = 8 + 4 * ndim
    payload = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
    if payload.size != count or len(data) != offset + 4 * count:
        raise ValueError(f"{path}: payload size mismatch")
    return payload.reshape(dims).astype(np.float64)
