"""Shufflers at model, layer, parameter and bit granularity.

The bit-granularity protocols quantize each clipped parameter to
``floor(p * 10**r)``, RNS-encode it, unary-encode every residue and let the
shuffler permute each concatenated channel ``B_{p,j}``.  The server only
counts ones per channel, reduces mod ``m_j`` and CRT-decodes the signed sum.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .bitvec import BitChannelBatch, pack, rle_compress, rle_decompress_many, unpack
from .errors import InvalidContext
from .fl.aggregate import fedavg, mean_rows
from .fl.model import ModelParams, check_layouts
from .mixnet import Message, MixnetConfig, Verdict, mixnet_route
from .rns import RnsContext, admissible, decode_signed_many, quantize_array, residues_array


class Granularity(str, enum.Enum):
    MODEL = "model"
    LAYER = "layer"
    PARAMETER = "parameter"
    BIT_RNS = "bit_rns"
    BIT_RNS_RLE = "bit_rns_rle"


@dataclass
class LayerView:
    """Layer-shuffled submission: one independently permuted list per layer."""

    layout: tuple
    layers: dict[str, list[np.ndarray]]


@dataclass
class ParameterView:
    """Parameter-shuffled submission: column ``p`` is a permutation of the clients' values of ``p``."""

    layout: tuple
    values: np.ndarray  # (n_clients, n_params)


@dataclass
class ShuffledSubmission:
    granularity: Granularity
    payload: Any
    rng_seed_commitment: str


def _commit(seed, label: str) -> str:
    return hashlib.sha256(f"{label}:{seed}".encode()).hexdigest()


def shuffle_models(models: Sequence[ModelParams], seed) -> ShuffledSubmission:
    perm = np.random.default_rng([seed, 0]).permutation(len(models))
    return ShuffledSubmission(Granularity.MODEL, [models[i] for i in perm], _commit(seed, "model"))


def shuffle_layers(models: Sequence[ModelParams], seed) -> ShuffledSubmission:
    layout = check_layouts(models)
    layers = {}
    for li, name in enumerate(models[0].layer_names):
        perm = np.random.default_rng([seed, 1, li]).permutation(len(models))
        layers[name] = [models[i].layer_flat(name) for i in perm]
    return ShuffledSubmission(Granularity.LAYER, LayerView(layout, layers), _commit(seed, "layer"))


def shuffle_parameters(models: Sequence[ModelParams], seed) -> ShuffledSubmission:
    layout = check_layouts(models)
    stacked = np.stack([m.flatten() for m in models])
    # Generator.permuted with axis=0 draws an independent permutation per column
    values = np.random.default_rng([seed, 2]).permuted(stacked, axis=0)
    return ShuffledSubmission(Granularity.PARAMETER, ParameterView(layout, values), _commit(seed, "parameter"))


def aggregate_submission(sub: ShuffledSubmission) -> ModelParams:
    """Equal-weight FedAvg computed from what the server receives."""
    if sub.granularity is Granularity.MODEL:
        return fedavg(sub.payload)
    if sub.granularity is Granularity.LAYER:
        view: LayerView = sub.payload
        flat = np.concatenate([mean_rows(np.stack(v)) for v in view.layers.values()])
        return ModelParams.unflatten(view.layout, flat)
    if sub.granularity is Granularity.PARAMETER:
        return ModelParams.unflatten(sub.payload.layout, mean_rows(sub.payload.values))
    raise ValueError("bit-level submissions are aggregated by alg1_server")


# ---------------------------------------------------------------- bit level


@dataclass
class Alg1Result:
    aggregate: ModelParams
    transcript: BitChannelBatch
    sums: list[int]  # decoded signed sums of quantized values, one per parameter
    verdict: Verdict
    client_bits_per_param: int


def _check_context(n: int, ctx: RnsContext) -> None:
    if not admissible(ctx.moduli, n, ctx.precision_r):
        raise InvalidContext(f"moduli {ctx.moduli} are not admissible for n={n}, r={ctx.precision_r}")


def client_residues(models: Sequence[ModelParams], ctx: RnsContext,
                    sizes: Sequence[float] | None = None) -> tuple[tuple, np.ndarray]:
    """Quantize and RNS-encode every client's parameters: shape (n, P, u).

    With ``sizes``, client ``i`` first multiplies its parameters by
    ``n * N_i / N`` so that the unweighted mean the server decodes is the
    size-weighted FedAvg; scaled values must still lie in (-1, 1).
    """
    layout = check_layouts(models)
    flats = np.stack([m.flatten() for m in models])
    if sizes is not None:
        w = np.asarray(sizes, dtype=np.float64)
        if w.shape != (len(models),) or np.any(w <= 0):
            raise ValueError("sizes must be positive, one per model")
        flats = flats * (len(models) * w / w.sum())[:, None]
    return layout, residues_array(quantize_array(flats, ctx.precision_r), ctx)


def _route_seed(seed, p: int, j: int) -> int:
    return int(np.random.SeedSequence([seed, p, j]).generate_state(1)[0])


def shuffle_channels(batch: BitChannelBatch, seed, mixnet: MixnetConfig | None = None) -> tuple[BitChannelBatch, Verdict]:
    """Bit-shuffle every channel with its own stream derived from ``(seed, p, j)``.

    Channels of trap parameters are routed through ``mixnet`` one bit per
    message when a MixNet is given.
    """
    traps = mixnet.trap_indices if mixnet is not None else frozenset()
    verdict = Verdict()
    out = []
    for j, packed in enumerate(batch.channels):
        length = batch.channel_length(j)
        bits = unpack(packed, length)
        shuffled = np.empty_like(bits)
        for p in range(bits.shape[0]):
            if p in traps:
                msgs = [Message(p, bytes([b])) for b in bits[p].tolist()]
                routed, v = mixnet_route(msgs, mixnet, seed=_route_seed(seed, p, j))
                if not v.ok and verdict.ok:
                    verdict = v
                shuffled[p] = [m.payload[0] & 1 for m in routed]
            else:
                shuffled[p] = bits[p][np.random.default_rng([seed, p, j]).permutation(length)]
        out.append(pack(shuffled))
    return BitChannelBatch(batch.moduli, batch.n_clients, batch.precision_r, out), verdict


def alg1_server(transcript: BitChannelBatch, ctx: RnsContext) -> list[int]:
    """Popcount each channel, reduce mod m_j, and CRT-decode the signed sums."""
    residues = transcript.popcounts() % np.asarray(ctx.moduli, dtype=np.int64)
    return decode_signed_many(residues, ctx)


def _finish(layout, sums: list[int], ctx: RnsContext, n: int) -> ModelParams:
    scale = 10**ctx.precision_r * n
    return ModelParams.unflatten(layout, np.array([s / scale for s in sums], dtype=np.float64))


def run_alg1_detailed(client_models: Sequence[ModelParams], ctx: RnsContext, seed,
                      mixnet: MixnetConfig | None = None, sizes: Sequence[float] | None = None) -> Alg1Result:
    n = len(client_models)
    _check_context(n, ctx)
    layout, residues = client_residues(client_models, ctx, sizes)
    batch = BitChannelBatch.from_residues(residues, ctx.moduli, ctx.precision_r)
    transcript, verdict = shuffle_channels(batch, seed, mixnet)
    sums = alg1_server(transcript, ctx)
    return Alg1Result(_finish(layout, sums, ctx, n), transcript, sums, verdict, sum(ctx.moduli))


def run_alg1(client_models: Sequence[ModelParams], ctx: RnsContext, seed) -> tuple[ModelParams, BitChannelBatch]:
    res = run_alg1_detailed(client_models, ctx, seed)
    return res.aggregate, res.transcript


def run_alg1_rle_detailed(client_models: Sequence[ModelParams], ctx: RnsContext, seed,
                          mixnet: MixnetConfig | None = None, sizes: Sequence[float] | None = None) -> Alg1Result:
    """Clients send residue counts; the (fully trusted) shuffler expands them to unary before shuffling."""
    n = len(client_models)
    _check_context(n, ctx)
    layout, residues = client_residues(client_models, ctx, sizes)
    # client side: fixed-width counts; widths only matter for the cost accounting
    widths = [rle_compress(0, m).width for m in ctx.moduli]
    P = residues.shape[1]
    channels = []
    for j, m in enumerate(ctx.moduli):
        bits = rle_decompress_many(residues[:, :, j], m)  # (n, P, m)
        channels.append(pack(bits.transpose(1, 0, 2).reshape(P, n * m)))
    batch = BitChannelBatch(ctx.moduli, n, ctx.precision_r, channels)
    transcript, verdict = shuffle_channels(batch, seed, mixnet)
    sums = alg1_server(transcript, ctx)
    return Alg1Result(_finish(layout, sums, ctx, n), transcript, sums, verdict, sum(widths))


def run_alg1_rle(client_models: Sequence[ModelParams], ctx: RnsContext, seed) -> tuple[ModelParams, BitChannelBatch]:
    res = run_alg1_rle_detailed(client_models, ctx, seed)
    return res.aggregate, res.transcript
