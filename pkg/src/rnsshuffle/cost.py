"""Closed-form communication cost per parameter per client, in bits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .bitvec import rle_width
from .rns import RnsContext, Strategy, select_moduli

VANILLA_BITS = 32
SCHEMES = ("alg1", "alg1_rle", "vanilla32", "secure_agg")


def _moduli(ctx: RnsContext | Sequence[int]) -> tuple[int, ...]:
    return ctx.moduli if isinstance(ctx, RnsContext) else tuple(int(m) for m in ctx)


def cost_alg1(ctx: RnsContext | Sequence[int]) -> int:
    """Unary bits per parameter: one bit per unit of every modulus."""
    return sum(_moduli(ctx))


def cost_alg1_rle(ctx: RnsContext | Sequence[int]) -> int:
    return sum(rle_width(m) for m in _moduli(ctx))


def sa_share_width(n: int, r: int) -> int:
    """Smallest share width that holds a sum of ``n`` signed ``r``-digit values."""
    span = 2 * n * (10**r - 1) + 1
    return (span - 1).bit_length()  # ceil(log2(span))


def cost_secure_agg(n: int, r: int) -> int:
    """Each client secret-shares its value with the other ``n - 1`` clients."""
    if n < 2:
        raise ValueError("secure aggregation needs at least 2 clients")
    return sa_share_width(n, r) * (n - 1)


def expansion_factor(bits: int) -> float:
    return bits / VANILLA_BITS


def shuffle_rounds(ctx: RnsContext | Sequence[int]) -> int:
    return len(_moduli(ctx))


@dataclass(frozen=True)
class CostReport:
    context: RnsContext
    bits: dict[str, int]
    shuffle_rounds: int

    @property
    def expansion(self) -> dict[str, float]:
        return {k: expansion_factor(v) for k, v in self.bits.items()}

    def to_record(self) -> dict:
        n, r = self.context.n_clients, self.context.precision_r
        rec = {"n": n, "r": r, "moduli": list(self.context.moduli), "shuffle_rounds": self.shuffle_rounds}
        for k, v in self.bits.items():
            rec[f"{k}_bits"] = v
            rec[f"{k}_expansion"] = round(expansion_factor(v), 6)
        return rec


def cost_report(ctx: RnsContext) -> CostReport:
    n = ctx.n_clients
    bits = {
        "alg1": cost_alg1(ctx),
        "alg1_rle": cost_alg1_rle(ctx),
        "vanilla32": VANILLA_BITS,
        "secure_agg": cost_secure_agg(n, ctx.precision_r) if n >= 2 else 0,
    }
    return CostReport(ctx, bits, shuffle_rounds(ctx))


def cost_table(ns: Iterable[int], rs: Iterable[int],
               strategy: Strategy | str = Strategy.CONSECUTIVE_PRIMES) -> list[dict]:
    rs = list(rs)
    return [cost_report(select_moduli(n, r, strategy)).to_record() for n in ns for r in rs]


def transcript_bytes_per_param(ctx: RnsContext | Sequence[int], n: int) -> int:
    """Packed size of one parameter's channels; each channel is padded to a whole byte."""
    return sum(math.ceil(n * m / 8) for m in _moduli(ctx))
