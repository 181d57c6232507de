"""Unary bit vectors, packed bit channels and the run-length count form.

Bits are packed into bytes with little-endian bit order: logical bit ``i`` of
a channel is bit ``i % 8`` of byte ``i // 8``.  The same layout is used in
memory and in transcript dump files.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

from .errors import FormatError, Overflow

TRANSCRIPT_MAGIC = b"RNSX"
TRANSCRIPT_VERSION = 1
_HEADER = struct.Struct("<4sHBBIIHHQ")

GRANULARITY_CODES = {"model": 0, "layer": 1, "parameter": 2, "bit_rns": 3, "bit_rns_rle": 4}


def pack(bits: np.ndarray) -> np.ndarray:
    return np.packbits(np.asarray(bits, dtype=np.uint8), axis=-1, bitorder="little")


def unpack(packed: np.ndarray, length: int) -> np.ndarray:
    return np.unpackbits(packed, axis=-1, count=length, bitorder="little")


@dataclass(frozen=True)
class UnaryBits:
    packed: bytes
    capacity: int

    @property
    def bits(self) -> np.ndarray:
        return unpack(np.frombuffer(self.packed, dtype=np.uint8), self.capacity)

    def __len__(self) -> int:
        return self.capacity

    def __str__(self) -> str:
        return "".join(map(str, self.bits.tolist()))

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "UnaryBits":
        arr = np.asarray(bits, dtype=np.uint8)
        return cls(pack(arr).tobytes(), int(arr.size))


def unary_encode(x: int, k: int) -> UnaryBits:
    """``x`` ones followed by ``k - x`` zeros."""
    if k < 1:
        raise ValueError("capacity must be positive")
    if not 0 <= x <= k:
        raise Overflow(f"cannot encode {x} in {k} unary bits")
    return UnaryBits.from_bits(np.arange(k) < x)


def unary_sum(bits) -> int:
    """Popcount of a bit sequence, a :class:`UnaryBits`, or a ``'0'/'1'`` string."""
    if isinstance(bits, UnaryBits):
        return int(np.bitwise_count(np.frombuffer(bits.packed, dtype=np.uint8)).sum())
    if isinstance(bits, str):
        return bits.count("1")
    return int(np.count_nonzero(np.asarray(bits, dtype=np.uint8)))


def rle_width(m: int) -> int:
    """Bits needed to carry a residue in [0, m - 1]."""
    return max(1, (m - 1).bit_length())


@dataclass(frozen=True)
class RleCount:
    value: int
    width: int

    def to_bits(self) -> np.ndarray:
        return np.array([(self.value >> i) & 1 for i in range(self.width)], dtype=np.uint8)


def rle_compress(x: int, m: int) -> RleCount:
    if not 0 <= x < m:
        raise Overflow(f"residue {x} not in [0, {m})")
    return RleCount(int(x), rle_width(m))


def rle_decompress_many(counts: np.ndarray, m: int) -> np.ndarray:
    """Vectorised decompression; returns a bool array with a trailing axis of ``m`` bits."""
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size and (counts.min() < 0 or counts.max() >= m):
        raise Overflow(f"counts must lie in [0, {m})")
    return np.arange(m) < counts[..., None]


def rle_decompress(count, m: int) -> UnaryBits:
    value = count.value if isinstance(count, RleCount) else int(count)
    if not 0 <= value < m:
        raise Overflow(f"count {value} not in [0, {m})")
    return unary_encode(value, m)


@dataclass
class BitChannelBatch:
    """Concatenated per-parameter, per-residue channels ``B_{p,j}``.

    ``channels[j]`` is a packed uint8 array of shape ``(n_params, bytes_j)``
    whose rows hold ``n_clients * moduli[j]`` logical bits.  ``origin_spans``
    gives each client's bit offset inside channel ``j`` and only exists
    before shuffling.
    """

    moduli: tuple[int, ...]
    n_clients: int
    precision_r: int
    channels: list[np.ndarray]
    origin_spans: list[np.ndarray] | None = None

    @property
    def n_params(self) -> int:
        return int(self.channels[0].shape[0]) if self.channels else 0

    def channel_length(self, j: int) -> int:
        return self.n_clients * self.moduli[j]

    def channel(self, p: int, j: int) -> np.ndarray:
        return unpack(self.channels[j][p], self.channel_length(j))

    def popcounts(self) -> np.ndarray:
        """Shape ``(n_params, u)`` popcount of every channel."""
        return np.stack([np.bitwise_count(c).sum(axis=1, dtype=np.int64) for c in self.channels], axis=1)

    def bytes_per_param(self) -> int:
        return sum(int(c.shape[1]) for c in self.channels)

    @classmethod
    def from_residues(cls, residues: np.ndarray, moduli: Sequence[int], r: int) -> "BitChannelBatch":
        """Unary-encode ``residues`` (shape ``(n_clients, n_params, u)``) and concatenate per channel."""
        n, P, u = residues.shape
        channels, spans = [], []
        for j, m in enumerate(moduli):
            bits = np.arange(m) < residues[:, :, j, None]  # (n, P, m)
            concat = bits.transpose(1, 0, 2).reshape(P, n * m)
            channels.append(pack(concat))
            spans.append(np.arange(n, dtype=np.int64) * m)
        return cls(tuple(moduli), n, r, channels, spans)


def write_transcript(batch: BitChannelBatch, fh: BinaryIO | str | Path, granularity: str = "bit_rns") -> int:
    """Write a transcript dump; returns the number of bytes written."""
    if isinstance(fh, (str, Path)):
        with open(fh, "wb") as f:
            return write_transcript(batch, f, granularity)
    u = len(batch.moduli)
    header = _HEADER.pack(
        TRANSCRIPT_MAGIC, TRANSCRIPT_VERSION, GRANULARITY_CODES[granularity], 0,
        batch.n_clients, batch.precision_r, u, 0, batch.n_params,
    )
    written = fh.write(header)
    written += fh.write(struct.pack(f"<{u}Q", *batch.moduli))
    for p in range(batch.n_params):
        for c in batch.channels:
            written += fh.write(c[p].tobytes())
    return written


def read_transcript(fh: BinaryIO | str | Path) -> tuple[str, BitChannelBatch]:
    if isinstance(fh, (str, Path)):
        with open(fh, "rb") as f:
            return read_transcript(f)
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise FormatError("truncated transcript header")
    magic, version, gcode, _, n, r, u, _, P = _HEADER.unpack(head)
    if magic != TRANSCRIPT_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != TRANSCRIPT_VERSION:
        raise FormatError(f"unsupported transcript version {version}")
    moduli = struct.unpack(f"<{u}Q", fh.read(8 * u))
    widths = [(n * m + 7) // 8 for m in moduli]
    body = fh.read(P * sum(widths))
    if len(body) != P * sum(widths):
        raise FormatError("truncated transcript body")
    rows = np.frombuffer(body, dtype=np.uint8).reshape(P, sum(widths)) if P else np.zeros((0, sum(widths)), np.uint8)
    offsets = np.cumsum([0] + widths)
    channels = [rows[:, offsets[j]:offsets[j + 1]].copy() for j in range(u)]
    names = {v: k for k, v in GRANULARITY_CODES.items()}
    return names[gcode], BitChannelBatch(tuple(moduli), n, r, channels)


def transcript_bytes(batch: BitChannelBatch, granularity: str = "bit_rns") -> bytes:
    buf = io.BytesIO()
    write_transcript(batch, buf, granularity)
    return buf.getvalue()
