"""Residue number system codec.

Integers are mapped to residue vectors under pairwise-coprime moduli and
recovered with the Chinese remainder theorem.  Python integers are used for
the moduli product and CRT intermediates, so contexts with products well past
64 bits (n=10^4, r=16 gives M around 2e20) are exact.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ContextMismatch, InvalidContext, OutOfRange, RangeExceeded

# largest prime power considered by the min-sum search
MINSUM_CAP = 64


class Strategy(str, enum.Enum):
    CONSECUTIVE_PRIMES = "consecutive"
    MIN_SUM = "minsum"


def admissible(moduli: Sequence[int], n: int, r: int) -> bool:
    """True when the signed sum of ``n`` values bounded by ``10**r - 1`` cannot wrap."""
    M = math.prod(moduli)
    return n * (10**r - 1) < (M - 1) // 2


@dataclass(frozen=True)
class RnsContext:
    moduli: tuple[int, ...]
    precision_r: int
    n_clients: int

    def __post_init__(self):
        moduli = tuple(int(m) for m in self.moduli)
        object.__setattr__(self, "moduli", moduli)
        if not moduli:
            raise InvalidContext("moduli list is empty")
        if self.precision_r < 1 or self.n_clients < 1:
            raise InvalidContext("precision_r and n_clients must be positive")
        if any(m < 2 for m in moduli):
            raise InvalidContext(f"every modulus must be >= 2, got {moduli}")
        if list(moduli) != sorted(set(moduli)):
            raise InvalidContext(f"moduli must be sorted ascending and duplicate-free, got {moduli}")
        for a, b in itertools.combinations(moduli, 2):
            if math.gcd(a, b) != 1:
                raise InvalidContext(f"moduli {a} and {b} are not coprime")
        if not admissible(moduli, self.n_clients, self.precision_r):
            raise InvalidContext(
                f"moduli {moduli} (M={self.product_M}) cannot hold the signed sum of "
                f"{self.n_clients} values of {self.precision_r} digits: need "
                f"{self.n_clients * self.v_max} < {(self.product_M - 1) // 2}"
            )

    @classmethod
    def from_moduli(cls, moduli: Iterable[int], r: int = 1, n: int = 1) -> "RnsContext":
        return cls(tuple(sorted(moduli)), r, n)

    @cached_property
    def product_M(self) -> int:
        return math.prod(self.moduli)

    @property
    def v_max(self) -> int:
        return 10**self.precision_r - 1

    @property
    def u(self) -> int:
        return len(self.moduli)

    @property
    def signed_min(self) -> int:
        return -(self.product_M // 2)

    @property
    def signed_max(self) -> int:
        return (self.product_M - 1) // 2

    @cached_property
    def _crt_coefficients(self) -> tuple[int, ...]:
        # M_i * (M_i^-1 mod m_i), reduced mod M
        M = self.product_M
        coeffs = []
        for m in self.moduli:
            Mi = M // m
            coeffs.append((Mi * pow(Mi, -1, m)) % M)
        return tuple(coeffs)

    def to_record(self) -> dict:
        return {"moduli": list(self.moduli), "r": self.precision_r, "n": self.n_clients}

    @classmethod
    def from_record(cls, rec: dict) -> "RnsContext":
        return cls(tuple(rec["moduli"]), int(rec["r"]), int(rec["n"]))


@dataclass(frozen=True)
class ResidueVector:
    residues: tuple[int, ...]
    context: RnsContext

    def __post_init__(self):
        if len(self.residues) != self.context.u:
            raise ValueError("residue count does not match the number of moduli")
        for x, m in zip(self.residues, self.context.moduli):
            if not 0 <= x < m:
                raise ValueError(f"residue {x} outside [0, {m})")


def _primes() -> Iterator[int]:
    found: list[int] = []
    for c in itertools.count(2):
        if all(c % p for p in found if p * p <= c):
            found.append(c)
            yield c


def _consecutive_primes(n: int, r: int, start: Sequence[int] = ()) -> list[int]:
    moduli = list(start)
    for p in _primes():
        if any(math.gcd(p, m) != 1 for m in moduli):
            continue
        moduli.append(p)
        if admissible(moduli, n, r):
            return sorted(moduli)
    raise AssertionError("unreachable")


def _min_sum_moduli(n: int, r: int, cap: int = MINSUM_CAP) -> list[int] | None:
    """Branch and bound over one prime power (or nothing) per prime <= cap.

    Pruning uses two relaxations: the log-capacity still reachable, and the
    best log(m)/m ratio left, which bounds the extra sum any completion needs.
    """
    choices = [_prime_powers_upto(p, cap)[::-1] + [1] for p in _primes_upto(cap)]
    bound = n * (10**r - 1)
    need = math.log(2 * bound + 3)
    k = len(choices)
    cap_left = [0.0] * (k + 1)
    ratio_left = [0.0] * (k + 1)
    for i in range(k - 1, -1, -1):
        cap_left[i] = cap_left[i + 1] + math.log(choices[i][0])
        ratio_left[i] = max(ratio_left[i + 1], max(math.log(m) / m for m in choices[i][:-1]))

    upper = _consecutive_primes(n, r)
    best: list = [None, sum(upper) + 1]

    def search(i: int, M: int, total: int, chosen: list[int]) -> None:
        if total >= best[1]:
            return
        if bound < (M - 1) // 2:
            best[0], best[1] = list(chosen), total
            return
        if i == k:
            return
        missing = need - math.log(M)
        if missing > cap_left[i] + 1e-9 or total + missing / ratio_left[i] >= best[1] + 1e-9:
            return
        for m in choices[i]:
            if m == 1:
                search(i + 1, M, total, chosen)
            else:
                chosen.append(m)
                search(i + 1, M * m, total + m, chosen)
                chosen.pop()

    search(0, 1, 0, [])
    return sorted(best[0]) if best[0] is not None else None


def select_moduli(n: int, r: int, strategy: Strategy | str = Strategy.CONSECUTIVE_PRIMES) -> RnsContext:
    """Pick the smallest admissible moduli for ``n`` clients at precision ``r``.

    ``consecutive`` takes 2, 3, 5, ... until the product clears the bound.
    ``minsum`` minimises the sum of moduli over pairwise-coprime prime powers
    up to 64; if even the full cap set is too small it extends the best cap
    set with further primes.
    """
    if n < 1 or r < 1:
        raise ValueError("n and r must be positive")
    strategy = Strategy(strategy)
    if strategy is Strategy.CONSECUTIVE_PRIMES:
        moduli = _consecutive_primes(n, r)
    else:
        moduli = _min_sum_moduli(n, r)
        if moduli is None:
            base = [_prime_powers_upto(p, MINSUM_CAP)[-1] for p in _primes_upto(MINSUM_CAP)]
            moduli = _consecutive_primes(n, r, start=base)
    return RnsContext(tuple(moduli), r, n)


def _primes_upto(limit: int) -> list[int]:
    return list(itertools.takewhile(lambda q: q <= limit, _primes()))


def _prime_powers_upto(p: int, limit: int) -> list[int]:
    out, q = [], p
    while q <= limit:
        out.append(q)
        q *= p
    return out


def _check_range(x: int, ctx: RnsContext) -> None:
    # signed range plus the unsigned range [0, M) used by plain CRT decoding
    if not ctx.signed_min <= x < ctx.product_M:
        raise RangeExceeded(f"{x} outside [{ctx.signed_min}, {ctx.product_M - 1}] for moduli {ctx.moduli}")


def rns_encode(x: int, ctx: RnsContext) -> ResidueVector:
    x = int(x)
    _check_range(x, ctx)
    if x >= 0:
        res = tuple(x % m for m in ctx.moduli)
    else:
        res = tuple((m - (-x) % m) % m for m in ctx.moduli)
    return ResidueVector(res, ctx)


def crt_solve(res: ResidueVector) -> int:
    ctx = res.context
    return sum(a * c for a, c in zip(res.residues, ctx._crt_coefficients)) % ctx.product_M


def to_signed(y: int, ctx: RnsContext) -> int:
    return y if y <= ctx.signed_max else y - ctx.product_M


def rns_decode_signed(res: ResidueVector) -> int:
    return to_signed(crt_solve(res), res.context)


def rns_add(a: ResidueVector, b: ResidueVector) -> ResidueVector:
    if a.context.moduli != b.context.moduli:
        raise ContextMismatch(f"cannot add residues over {a.context.moduli} and {b.context.moduli}")
    return ResidueVector(
        tuple((x + y) % m for x, y, m in zip(a.residues, b.residues, a.context.moduli)), a.context
    )


def scale_quantize(p: float, r: int) -> int:
    """floor(p * 10**r) computed exactly on the binary value of ``p``."""
    if not -1 < p < 1:
        raise OutOfRange(f"parameter {p} outside (-1, 1)")
    return math.floor(Fraction(p) * 10**r)


def quantize_array(values: np.ndarray, r: int) -> np.ndarray:
    """Elementwise :func:`scale_quantize`; returns int64 (r <= 18)."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    if flat.size and not (np.all(flat > -1) and np.all(flat < 1)):
        raise OutOfRange("parameters must lie in (-1, 1) before quantization")
    scale = 10**r
    out = np.empty(flat.size, dtype=np.int64)
    for i, p in enumerate(flat.tolist()):
        num, den = p.as_integer_ratio()
        out[i] = (num * scale) // den
    return out.reshape(np.shape(values))


def residues_array(xs: np.ndarray, ctx: RnsContext) -> np.ndarray:
    """Vectorised encode of an int64 array; output has a trailing residue axis."""
    xs = np.asarray(xs, dtype=np.int64)
    if xs.size and (xs.min() < ctx.signed_min or xs.max() >= ctx.product_M):
        raise RangeExceeded("values outside the representable range")
    # residue-major storage keeps every per-modulus pass contiguous; the
    # returned view still has the residue axis last
    out = np.empty((ctx.u,) + xs.shape, dtype=np.int64)
    for j, m in enumerate(ctx.moduli):
        # numpy's % takes the divisor's sign, so negatives land in [0, m)
        np.remainder(xs, m, out=out[j])
    return np.moveaxis(out, 0, -1)


def fits_int64(ctx: RnsContext) -> bool:
    """True when CRT intermediates of ``ctx`` stay below 2**62."""
    return ctx.u * max(ctx.moduli) * ctx.product_M < 1 << 62


def decode_signed_array(residues: np.ndarray, ctx: RnsContext) -> np.ndarray:
    """Vectorised signed CRT decode in int64; requires :func:`fits_int64`."""
    if not fits_int64(ctx):
        raise OverflowError(f"moduli {ctx.moduli} exceed the int64 decoder; use decode_signed_many")
    res = np.asarray(residues, dtype=np.int64)
    M = ctx.product_M
    y = np.zeros(res.shape[:-1], dtype=np.int64)
    tmp = np.empty_like(y)
    for j, c in enumerate(ctx._crt_coefficients):
        np.multiply(res[..., j], c, out=tmp)
        y += tmp
    y %= M
    y[y > ctx.signed_max] -= M
    return y


def decode_signed_many(residues: np.ndarray, ctx: RnsContext) -> list[int]:
    """CRT-decode each row of ``residues`` (shape (..., u)) to a signed int."""
    if fits_int64(ctx):
        return decode_signed_array(residues, ctx).reshape(-1).tolist()
    rows = np.asarray(residues).reshape(-1, ctx.u).tolist()
    coeffs = ctx._crt_coefficients
    M = ctx.product_M
    out = []
    for row in rows:
        y = sum(a * c for a, c in zip(row, coeffs)) % M
        out.append(to_signed(y, ctx))
    return out
