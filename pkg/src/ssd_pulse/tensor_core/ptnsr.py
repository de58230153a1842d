"""PTNSR binary tensor format.

Layout: ``b"PTNSR1"``, little-endian u32 rank, ``rank`` u32 dims, then the
float32 payload in row-major order.
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from ssd_pulse.errors import TensorFormatError
from ssd_pulse.tensor_core.kernels import as_tensor

MAGIC = b"PTNSR1"


def encode_ptnsr(x) -> bytes:
    arr = as_tensor(x, name="ptnsr payload")
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.astype("<f4").tobytes(order="C")


def decode_ptnsr(blob: bytes) -> np.ndarray:
    if len(blob) < len(MAGIC) + 4 or blob[: len(MAGIC)] != MAGIC:
        raise TensorFormatError("not a PTNSR blob (bad magic bytes)")
    pos = len(MAGIC)
    (rank,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    if rank == 0 or len(blob) < pos + 4 * rank:
        raise TensorFormatError(f"PTNSR header truncated or invalid rank {rank}")
    dims = struct.unpack_from(f"<{rank}I", blob, pos)
    pos += 4 * rank
    if any(d == 0 for d in dims):
        raise TensorFormatError(f"PTNSR dims must be positive, got {dims}")
    count = int(np.prod(dims, dtype=np.int64))
    if len(blob) - pos != 4 * count:
        raise TensorFormatError(f"PTNSR payload has {len(blob) - pos} bytes, expected {4 * count} for shape {dims}")
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=pos)
    return data.astype(np.float32).reshape(dims)


def atomic_write_bytes(path: str | os.PathLike, payload: bytes) -> None:
    """Write ``payload`` to ``path`` via a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_ptnsr(path: str | os.PathLike, x) -> None:
    atomic_write_bytes(path, encode_ptnsr(x))


def read_ptnsr(path: str | os.PathLike) -> np.ndarray:
    return decode_ptnsr(Path(path).read_bytes())
