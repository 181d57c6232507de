import io
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import GOLDEN
from oracles import ceil_log2, unary_string
from rnsshuffle.bitvec import (
    BitChannelBatch,
    RleCount,
    UnaryBits,
    read_transcript,
    rle_compress,
    rle_decompress,
    rle_decompress_many,
    rle_width,
    transcript_bytes,
    unary_encode,
    unary_sum,
    write_transcript,
)
from rnsshuffle.errors import FormatError, Overflow
from rnsshuffle.rns import RnsContext, decode_signed_many, residues_array


@pytest.mark.parametrize("x,k,expected", [(3, 7, "1110000"), (0, 5, "00000"), (6, 7, "1111110")])
def test_unary_encode_examples(x, k, expected):
    assert str(unary_encode(x, k)) == expected


def test_unary_encode_overflow():
    with pytest.raises(Overflow):
        unary_encode(8, 7)


@given(st.integers(1, 300).flatmap(lambda k: st.tuples(st.integers(0, k), st.just(k))))
def test_unary_matches_oracle_and_sums(xk):
    x, k = xk
    u = unary_encode(x, k)
    assert str(u) == unary_string(x, k)
    assert len(u) == k
    assert unary_sum(u) == x


def test_unary_sum_examples():
    assert unary_sum("1110000") == 3
    assert unary_sum([]) == 0
    assert unary_sum(UnaryBits.from_bits([])) == 0


@given(st.permutations(list("1110000")))
def test_unary_sum_permutation_invariant(perm):
    assert unary_sum("".join(perm)) == 3
    assert unary_sum(UnaryBits.from_bits([int(b) for b in perm])) == 3


@pytest.mark.parametrize("x,m,width", [(3, 10, 4), (0, 2, 1), (6, 7, 3)])
def test_rle_compress_examples(x, m, width):
    c = rle_compress(x, m)
    assert c == RleCount(x, width)
    assert c.width == ceil_log2(m)
    assert str(rle_decompress(c, m)) == unary_string(x, m)


def test_rle_overflow():
    with pytest.raises(Overflow):
        rle_compress(7, 7)
    with pytest.raises(Overflow):
        rle_decompress(5, 5)
    with pytest.raises(Overflow):
        rle_decompress_many(np.array([0, 3]), 3)


@given(st.integers(2, 4096).flatmap(lambda m: st.tuples(st.integers(0, m - 1), st.just(m))))
def test_rle_roundtrip_and_width(xm):
    x, m = xm
    c = rle_compress(x, m)
    assert c.width == ceil_log2(m) == rle_width(m)
    assert rle_decompress(c, m) == unary_encode(x, m)
    bits = c.to_bits()
    assert sum(int(b) << i for i, b in enumerate(bits)) == x


def test_rle_decompress_many_matches_scalar(rng):
    counts = rng.integers(0, 11, size=(4, 6))
    many = rle_decompress_many(counts, 11)
    for idx in np.ndindex(counts.shape):
        assert "".join(map(str, many[idx].astype(int))) == unary_string(int(counts[idx]), 11)


# ---------------------------------------------------------------- channel batches


def _batch(rng, n=4, P=5, moduli=(3, 5, 7, 11)):
    ctx = RnsContext(moduli, 1, n)
    xs = rng.integers(-9, 10, size=(n, P))
    return xs, ctx, BitChannelBatch.from_residues(residues_array(xs, ctx), moduli, 1)


def test_channel_lengths_and_spans(rng):
    xs, ctx, b = _batch(rng)
    for j, m in enumerate(ctx.moduli):
        assert b.channel(0, j).size == 4 * m
        assert b.origin_spans[j].tolist() == [0, m, 2 * m, 3 * m]


def test_channel_is_concatenation_of_unary_codes(rng):
    xs, ctx, b = _batch(rng)
    res = residues_array(xs, ctx)
    for p in range(xs.shape[1]):
        for j, m in enumerate(ctx.moduli):
            expected = "".join(unary_string(int(res[i, p, j]), m) for i in range(xs.shape[0]))
            assert "".join(map(str, b.channel(p, j))) == expected


def test_popcounts_decode_to_column_sums(rng):
    xs, ctx, b = _batch(rng)
    res = b.popcounts() % np.array(ctx.moduli)
    assert decode_signed_many(res, ctx) == xs.sum(axis=0).tolist()


def test_shuffled_batches_decode_identically():
    # popcounts and lengths survive any permutation of any channel
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n, P = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        moduli = (2, 3, 5, 7, 11)
        ctx = RnsContext(moduli, 1, n)
        xs = rng.integers(-9, 10, size=(n, P))
        b = BitChannelBatch.from_residues(residues_array(xs, ctx), moduli, 1)
        before = b.popcounts()
        shuffled = []
        for j, m in enumerate(moduli):
            bits = np.stack([b.channel(p, j) for p in range(P)])
            perm = rng.permuted(bits, axis=1)
            shuffled.append(np.packbits(perm, axis=-1, bitorder="little"))
        s = BitChannelBatch(moduli, n, 1, shuffled)
        assert np.array_equal(s.popcounts(), before)
        assert decode_signed_many(s.popcounts() % np.array(moduli), ctx) == xs.sum(axis=0).tolist()


def test_bytes_per_param(rng):
    _, ctx, b = _batch(rng)
    assert b.bytes_per_param() == sum(-(-4 * m // 8) for m in ctx.moduli)


# ---------------------------------------------------------------- transcript dump


def _golden_batch():
    ctx = RnsContext((2, 3, 5, 7, 11), 2, 2)
    xs = np.array([[55, -3, 0], [-21, 99, -99]])
    return BitChannelBatch.from_residues(residues_array(xs, ctx), ctx.moduli, 2)


def test_transcript_roundtrip(rng):
    _, ctx, b = _batch(rng)
    buf = io.BytesIO()
    n_written = write_transcript(b, buf, "bit_rns_rle")
    assert n_written == len(buf.getvalue())
    buf.seek(0)
    gran, back = read_transcript(buf)
    assert gran == "bit_rns_rle"
    assert back.moduli == b.moduli and back.n_clients == 4 and back.precision_r == 1
    assert all(np.array_equal(x, y) for x, y in zip(back.channels, b.channels))
    assert back.origin_spans is None


def test_transcript_header_layout():
    blob = transcript_bytes(_golden_batch())
    magic, version, gran, _, n, r, u, _, P = struct.unpack_from("<4sHBBIIHHQ", blob)
    assert (magic, version, gran, n, r, u, P) == (b"RNSX", 1, 3, 2, 2, 5, 3)
    assert struct.unpack_from("<5Q", blob, 28) == (2, 3, 5, 7, 11)
    # parameter 0, modulus 2: residues 55%2=1 and -21%2=1 -> bits 1,0,1,0 -> 0b0101
    assert blob[68] == 0b0101


def test_transcript_golden_file():
    assert transcript_bytes(_golden_batch()) == (GOLDEN / "transcript_v1.bin").read_bytes()


def test_transcript_rejects_bad_input():
    blob = transcript_bytes(_golden_batch())
    with pytest.raises(FormatError):
        read_transcript(io.BytesIO(b"XXXX" + blob[4:]))
    with pytest.raises(FormatError):
        read_transcript(io.BytesIO(blob[:-1]))
    with pytest.raises(FormatError):
        read_transcript(io.BytesIO(blob[:10]))
    bad_version = bytearray(blob)
    bad_version[4] = 9
    with pytest.raises(FormatError):
        read_transcript(io.BytesIO(bytes(bad_version)))
