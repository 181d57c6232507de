"""In-process MixNet shuffler with three trust levels.

Onion layers and zero-knowledge proofs are simulated.  Each envelope carries a
keyed tag binding it to the server allowed to strip it; the proof a server
hands to the next hop is a pair of order-independent multiset digests over
the trap-carrying messages it received and emitted.  A real AEAD or verifiable
shuffle can replace either piece behind the same calls.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ConfigInvalid

_DIGEST_MOD = 1 << 256


class Trust(str, enum.Enum):
    FULL = "full"
    SEMI = "semi"
    MALICIOUS = "malicious"


class Behavior(str, enum.Enum):
    HONEST = "honest"
    IDENTITY = "identity"  # forwards without shuffling
    TAMPER = "tamper"  # shuffles, then flips one payload bit


@dataclass(frozen=True)
class Message:
    param_index: int
    payload: bytes


@dataclass(frozen=True)
class MixServer:
    ident: str
    key: bytes
    behavior: Behavior = Behavior.HONEST

    @property
    def honest(self) -> bool:
        return self.behavior is Behavior.HONEST


@dataclass
class MixnetConfig:
    servers: list[MixServer]
    trust: Trust = Trust.SEMI
    trap_indices: frozenset[int] = field(default_factory=frozenset)
    # parameter index a tampering server aims at; None means the first message
    tamper_target: int | None = None

    def __post_init__(self):
        self.trust = Trust(self.trust)
        self.trap_indices = frozenset(int(i) for i in self.trap_indices)
        self.validate()

    @property
    def adversarial_mask(self) -> list[bool]:
        """True for each server that deviates from the protocol."""
        return [not s.honest for s in self.servers]

    def validate(self, param_count: int | None = None) -> None:
        if not self.servers:
            raise ConfigInvalid("a MixNet needs at least one server")
        if all(self.adversarial_mask):
            raise ConfigInvalid("at least one MixNet server must be honest")
        if len({s.ident for s in self.servers}) != len(self.servers):
            raise ConfigInvalid("server identities must be unique")
        if param_count is not None and any(not 0 <= i < param_count for i in self.trap_indices):
            raise ConfigInvalid(f"trap indices must lie in [0, {param_count})")

    @classmethod
    def build(cls, n_servers: int, trust: Trust | str = Trust.SEMI, behaviors: Sequence[Behavior | str] = (),
              trap_indices=(), tamper_target: int | None = None, seed: int = 0) -> "MixnetConfig":
        rng = np.random.default_rng([seed, 0x4D49])
        behaviors = list(behaviors) + [Behavior.HONEST] * (n_servers - len(behaviors))
        servers = [MixServer(f"mix{j}", rng.bytes(16), Behavior(b)) for j, b in enumerate(behaviors)]
        return cls(servers, Trust(trust), frozenset(trap_indices), tamper_target)


@dataclass(frozen=True)
class Verdict:
    flagged: str | None = None

    @property
    def ok(self) -> bool:
        return self.flagged is None

    def __str__(self) -> str:
        return "Ok" if self.ok else f"ServerFlagged({self.flagged})"


@dataclass(frozen=True)
class Envelope:
    server: str
    tag: bytes
    inner: "Envelope | Message"


@dataclass(frozen=True)
class Proof:
    digest_in: int
    digest_out: int


def _tag(server: MixServer, depth: int) -> bytes:
    return hashlib.blake2b(f"{server.ident}:{depth}".encode(), key=server.key, digest_size=16).digest()


def seal(msg: Message, servers: Sequence[MixServer]) -> Envelope | Message:
    """Wrap ``msg`` for ``servers``; the first server strips the outermost layer."""
    c: Envelope | Message = msg
    for depth in range(len(servers) - 1, -1, -1):
        c = Envelope(servers[depth].ident, _tag(servers[depth], depth), c)
    return c


def unseal(c: Envelope | Message, server: MixServer, depth: int) -> Envelope | Message:
    if not isinstance(c, Envelope) or c.server != server.ident or c.tag != _tag(server, depth):
        raise ValueError(f"envelope not addressed to {server.ident}")
    return c.inner


def core(c: Envelope | Message) -> Message:
    while isinstance(c, Envelope):
        c = c.inner
    return c


def multiset_digest(items: Sequence[Envelope | Message], traps: frozenset[int]) -> int:
    """Order-independent digest of the trap-carrying messages."""
    acc = 0
    for c in items:
        m = core(c)
        if m.param_index in traps:
            h = hashlib.sha256(m.param_index.to_bytes(8, "little") + m.payload).digest()
            acc = (acc + int.from_bytes(h, "little")) % _DIGEST_MOD
    return acc


def _flip_bit(c: Envelope | Message) -> Envelope | Message:
    if isinstance(c, Message):
        payload = bytearray(c.payload or b"\x00")
        payload[0] ^= 1
        return Message(c.param_index, bytes(payload))
    return Envelope(c.server, c.tag, _flip_bit(c.inner))


def mixnet_route(messages: Sequence[Message], cfg: MixnetConfig, seed: int) -> tuple[list[Message], Verdict]:
    """Pass ``messages`` through every server in order.

    Returns the delivered messages and a verdict.  Under ``malicious`` trust
    each hop (and finally the receiver) checks the previous hop's proof; a
    mismatch stops the run and flags that hop.
    """
    cfg.validate()
    servers = cfg.servers
    sealed = cfg.trust is not Trust.FULL
    check = cfg.trust is Trust.MALICIOUS
    batch: list[Envelope | Message] = [seal(m, servers) if sealed else m for m in messages]
    proof: Proof | None = None

    for depth, server in enumerate(servers):
        if sealed:
            batch = [unseal(c, server, depth) for c in batch]
        if check and proof is not None and not _verify(batch, proof, cfg.trap_indices):
            return [core(c) for c in batch], Verdict(servers[depth - 1].ident)
        received = batch
        rng = np.random.default_rng([seed, depth])
        if server.behavior is Behavior.IDENTITY:
            batch = list(received)
        else:
            batch = [received[i] for i in rng.permutation(len(received))]
        if server.behavior is Behavior.TAMPER and batch:
            pos = 0
            if cfg.tamper_target is not None:
                hits = [i for i, c in enumerate(batch) if core(c).param_index == cfg.tamper_target]
                pos = hits[0] if hits else 0
            batch[pos] = _flip_bit(batch[pos])
        if check:
            # proofs are sound: a server cannot claim a digest it did not produce
            proof = Proof(multiset_digest(received, cfg.trap_indices), multiset_digest(batch, cfg.trap_indices))

    out = [core(c) for c in batch]
    if check and proof is not None and not _verify(out, proof, cfg.trap_indices):
        return out, Verdict(servers[-1].ident)
    return out, Verdict()


def _verify(received: Sequence[Envelope | Message], proof: Proof, traps: frozenset[int]) -> bool:
    return proof.digest_in == proof.digest_out == multiset_digest(received, traps)


def select_traps(param_count: int, fraction: float, seed: int) -> np.ndarray:
    """Uniform sample of ``ceil(fraction * param_count)`` parameter indices, sorted."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    k = math.ceil(Fraction(str(fraction)) * param_count)
    rng = np.random.default_rng([seed, 0x7A9])
    return np.sort(rng.choice(param_count, size=k, replace=False))
