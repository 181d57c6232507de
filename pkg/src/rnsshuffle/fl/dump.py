"""Binary dump of a synthetic dataset together with its client partition.

Layout (little-endian): header ``<4sHHIIIId`` = magic ``RNSD``, version,
reserved, records N, dimension d, classes C, clients n, alpha; then the
class means (C*d f64), features (N*d f64), labels (N i64), owners (N i64).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .data import Dataset, Partition

MAGIC = b"RNSD"
VERSION = 1
_HEADER = struct.Struct("<4sHHIIIId")


def write_dataset(path: str | Path, ds: Dataset, partition: Partition) -> None:
    N, d = ds.X.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, 0, N, d, ds.classes, partition.n_clients, partition.alpha))
        for arr, dt in ((ds.means, "<f8"), (ds.X, "<f8"), (ds.y, "<i8"), (partition.owners, "<i8")):
            fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes())


def read_dataset(path: str | Path, noise_std: float = 1.0) -> tuple[Dataset, Partition]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("truncated dataset header")
    magic, version, _, N, d, C, n, alpha = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    sizes = [C * d * 8, N * d * 8, N * 8, N * 8]
    if len(raw) != _HEADER.size + sum(sizes):
        raise FormatError("dataset body has the wrong length")
    off = _HEADER.size
    parts = []
    for size, dt in zip(sizes, ("<f8", "<f8", "<i8", "<i8")):
        parts.append(np.frombuffer(raw, dtype=dt, count=size // 8, offset=off).astype(dt[1:]))
        off += size
    means, X, y, owners = parts
    ds = Dataset(X.reshape(N, d), y, means.reshape(C, d), noise_std)
    shards = [np.flatnonzero(owners == i) for i in range(n)]
    return ds, Partition(shards, owners, alpha)
