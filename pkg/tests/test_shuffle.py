import itertools
from collections import Counter, defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2_contingency, chisquare

from helpers import random_models
from oracles import floor_quantize, plain_quantized_sums
from rnsshuffle.errors import InvalidContext, LayoutMismatch, OutOfRange
from rnsshuffle.fl import ModelParams, fedavg, init_model
from rnsshuffle.mixnet import MixnetConfig
from rnsshuffle.rns import RnsContext, Strategy, residues_array, select_moduli
from rnsshuffle.shuffle import (
    Granularity,
    aggregate_submission,
    client_residues,
    run_alg1,
    run_alg1_detailed,
    run_alg1_rle,
    run_alg1_rle_detailed,
    shuffle_layers,
    shuffle_models,
    shuffle_parameters,
)


def scalar_model(v: float) -> ModelParams:
    return ModelParams({"fc.weight": np.array([v])})


def labelled(n):
    return [scalar_model(i / 10) for i in range(n)]


# ---------------------------------------------------------------- model / layer / parameter


def test_shuffle_models_single_is_identity():
    m = labelled(1)
    assert shuffle_models(m, 3).payload[0] is m[0]


def test_shuffle_models_preserves_multiset(rng):
    models = random_models(rng, 5)
    out = shuffle_models(models, 11).payload
    assert sorted(id(m) for m in out) == sorted(id(m) for m in models)


def test_shuffle_models_uniform_over_orders():
    models = labelled(3)
    counts = Counter(tuple(m.flatten()[0] for m in shuffle_models(models, s).payload) for s in range(10**4))
    assert len(counts) == 6
    freqs = np.array(list(counts.values())) / 10**4
    assert np.all(np.abs(freqs - 1 / 6) < 0.02)
    assert chisquare(list(counts.values())).pvalue > 0.001


def test_shuffle_deterministic_given_seed(rng):
    models = random_models(rng, 4)
    a, b = shuffle_parameters(models, 5), shuffle_parameters(models, 5)
    assert np.array_equal(a.payload.values, b.payload.values)
    assert a.rng_seed_commitment == b.rng_seed_commitment
    assert a.rng_seed_commitment != shuffle_parameters(models, 6).rng_seed_commitment


def _layer_order(sub, name, models):
    firsts = [m.layer_flat(name)[0] for m in models]
    return tuple(firsts.index(v[0]) for v in sub.payload.layers[name])


def test_layer_permutations_independent():
    rng = np.random.default_rng(0)
    models = random_models(rng, 3)
    table = np.zeros((6, 6), dtype=int)
    orders = {p: i for i, p in enumerate(itertools.permutations(range(3)))}
    for seed in range(10**4):
        sub = shuffle_layers(models, seed)
        table[orders[_layer_order(sub, "fc1", models)], orders[_layer_order(sub, "fc2", models)]] += 1
    assert chi2_contingency(table).pvalue > 0.001
    assert chisquare(table.sum(axis=1)).pvalue > 0.001


def test_parameter_columns_are_permutations(rng):
    models = random_models(rng, 6)
    sub = shuffle_parameters(models, 1)
    original = np.stack([m.flatten() for m in models])
    assert np.array_equal(np.sort(sub.payload.values, axis=0), np.sort(original, axis=0))
    # columns are not all permuted the same way
    perms = {tuple(np.argsort(np.argsort(sub.payload.values[:, p]))) for p in range(original.shape[1])}
    assert len(perms) > 1


@pytest.mark.parametrize("shuffle", [shuffle_models, shuffle_layers, shuffle_parameters])
@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=30)
def test_aggregate_invariance_bit_exact(shuffle, seed):
    models = random_models(np.random.default_rng(seed % 97), 7)
    assert aggregate_submission(shuffle(models, seed)).equals(fedavg(models))


def test_identical_models_unchanged_by_layer_shuffle(rng):
    m = random_models(rng, 1)[0]
    sub = shuffle_layers([m, m.copy(), m.copy()], 4)
    for name in m.layer_names:
        assert all(np.array_equal(v, m.layer_flat(name)) for v in sub.payload.layers[name])


@pytest.mark.parametrize("shuffle", [shuffle_layers, shuffle_parameters])
def test_layout_mismatch(rng, shuffle):
    with pytest.raises(LayoutMismatch):
        shuffle([init_model(2, 3, 2, rng), init_model(2, 4, 2, rng)], 0)


def test_bit_submissions_not_aggregated_generically(rng):
    sub = shuffle_models(random_models(rng, 2), 0)
    sub.granularity = Granularity.BIT_RNS
    with pytest.raises(ValueError):
        aggregate_submission(sub)


# ---------------------------------------------------------------- bit-level protocol


def test_two_clients_055():
    ctx = select_moduli(2, 2)
    models = [scalar_model(0.55), scalar_model(0.55)]
    for run in (run_alg1, run_alg1_rle):
        agg, _ = run(models, ctx, 0)
        assert agg.flatten()[0] == 0.55


def test_357_is_rejected_for_two_clients_two_digits():
    with pytest.raises(InvalidContext):
        RnsContext((3, 5, 7), 2, 2)
    loose = RnsContext((3, 5, 7), 1, 2)
    with pytest.raises(InvalidContext):
        run_alg1([scalar_model(0.5)] * 6, loose, 0)


def test_identical_clients_give_quantized_model(rng):
    ctx = select_moduli(4, 3)
    m = random_models(rng, 1)[0]
    agg, _ = run_alg1([m] * 4, ctx, 9)
    q = np.array([floor_quantize(float(v), 3) for v in m.flatten()]) / 1000
    assert np.array_equal(agg.flatten(), q)
    assert np.all(np.abs(agg.flatten() - m.flatten()) < 1e-3)


@given(st.data())
@settings(max_examples=60)
def test_alg1_matches_plain_quantized_sums(data):
    n = data.draw(st.integers(1, 6))
    r = data.draw(st.integers(1, 6))
    strategy = data.draw(st.sampled_from(list(Strategy)))
    seed = data.draw(st.integers(0, 10**6))
    ctx = select_moduli(n, r, strategy)
    models = random_models(np.random.default_rng(seed), n, dim=2, hidden=2, classes=2)
    res = run_alg1_detailed(models, ctx, seed)
    flats = np.stack([m.flatten() for m in models])
    assert res.sums == plain_quantized_sums(flats, r)
    assert np.all(np.abs(res.aggregate.flatten() - flats.mean(axis=0)) <= 10.0**-r)


def test_alg1_rle_equivalent_to_alg1():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n, r = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        ctx = select_moduli(n, r)
        models = random_models(rng, n, dim=2, hidden=2, classes=2)
        seed = int(rng.integers(2**31))
        a, ta = run_alg1(models, ctx, seed)
        b, tb = run_alg1_rle(models, ctx, seed)
        assert a.equals(b)
        assert all(np.array_equal(x, y) for x, y in zip(ta.channels, tb.channels))


def test_rle_single_client_returns_own_quantized_model(rng):
    ctx = select_moduli(1, 2)
    m = random_models(rng, 1)[0]
    agg, _ = run_alg1_rle([m], ctx, 0)
    assert np.array_equal(agg.flatten(), [floor_quantize(float(v), 2) / 100 for v in m.flatten()])


def test_client_bit_counts():
    ctx = select_moduli(3, 2)
    models = [scalar_model(0.1)] * 3
    assert run_alg1_detailed(models, ctx, 0).client_bits_per_param == sum(ctx.moduli)
    widths = [(m - 1).bit_length() for m in ctx.moduli]
    assert run_alg1_rle_detailed(models, ctx, 0).client_bits_per_param == sum(widths)


def test_out_of_range_parameter_rejected():
    with pytest.raises(OutOfRange):
        run_alg1([scalar_model(1.0), scalar_model(0.0)], select_moduli(2, 2), 0)


def test_transcript_has_no_origin_spans(rng):
    ctx = select_moduli(3, 2)
    _, t = run_alg1(random_models(rng, 3), ctx, 0)
    assert t.origin_spans is None


def test_transcript_channels_are_shuffled(rng):
    ctx = select_moduli(5, 2)
    models = random_models(rng, 5)
    _, t = run_alg1(models, ctx, 0)
    from rnsshuffle.bitvec import BitChannelBatch
    plain = BitChannelBatch.from_residues(client_residues(models, ctx)[1], ctx.moduli, 2)
    assert np.array_equal(t.popcounts(), plain.popcounts())
    assert any(not np.array_equal(a, b) for a, b in zip(t.channels, plain.channels))


def test_weighted_prescaling_gives_weighted_mean():
    ctx = select_moduli(2, 4)
    models = [scalar_model(0.2), scalar_model(0.4)]
    res = run_alg1_detailed(models, ctx, 0, sizes=[1, 3])
    # client values become 2*0.25*0.2 = 0.1 and 2*0.75*0.4 = 0.6
    assert res.aggregate.flatten()[0] == pytest.approx(0.35, abs=1e-4)
    with pytest.raises(OutOfRange):
        run_alg1_detailed([scalar_model(0.9), scalar_model(0.1)], ctx, 0, sizes=[9, 1])
    with pytest.raises(ValueError):
        run_alg1_detailed(models, ctx, 0, sizes=[1, 0])


def _equal_residue_sum_pairs(ctx, r):
    """Groups of quantized 2-client value sets (a <= b) that differ yet share per-modulus residue sums.

    Callers feed ``(v + 0.5) / 10**r`` so that flooring lands exactly on ``v``.
    """
    lim = 10**r - 1
    groups = defaultdict(list)
    for a in range(-lim, lim + 1):
        for b in range(a, lim + 1):
            res = residues_array(np.array([a, b]), ctx)
            groups[tuple(res.sum(axis=0).tolist())].append((a, b))
    return [g for g in groups.values() if len(g) > 1]


def test_equal_residue_sums_give_identical_server_views():
    ctx = select_moduli(2, 1)
    groups = _equal_residue_sum_pairs(ctx, 1)
    assert groups
    for group in groups[:20]:
        views = []
        for a, b in group[:2]:
            models = [scalar_model((a + 0.5) / 10), scalar_model((b + 0.5) / 10)]
            res = run_alg1_detailed(models, ctx, 0)
            views.append((res.transcript.popcounts().tolist(), res.sums))
        assert views[0] == views[1]


def test_shuffled_channel_positions_equally_likely_to_hold_ones():
    ctx = select_moduli(2, 1)
    (a, b), (c, d) = _equal_residue_sum_pairs(ctx, 1)[0][:2]
    freq = []
    for pair in ((a, b), (c, d)):
        models = [scalar_model((v + 0.5) / 10) for v in pair]
        acc = None
        for seed in range(3000):
            t = run_alg1(models, ctx, seed)[1]
            bits = np.concatenate([np.unpackbits(ch[0], bitorder="little")[:2 * m]
                                   for ch, m in zip(t.channels, ctx.moduli)])
            acc = bits.astype(float) if acc is None else acc + bits
        freq.append(acc / 3000)
    assert np.all(np.abs(freq[0] - freq[1]) < 0.06)


def test_alg1_through_mixnet_matches_direct(rng):
    ctx = select_moduli(3, 2)
    models = random_models(rng, 3, dim=2, hidden=2, classes=2)
    mix = MixnetConfig.build(3, "malicious", trap_indices=[0, 3])
    res = run_alg1_detailed(models, ctx, 7, mixnet=mix)
    assert res.verdict.ok
    assert res.aggregate.equals(run_alg1(models, ctx, 7)[0])


def test_alg1_flags_tampering_mixnet(rng):
    ctx = select_moduli(3, 2)
    models = random_models(rng, 3, dim=2, hidden=2, classes=2)
    mix = MixnetConfig.build(3, "malicious", behaviors=["honest", "tamper"], trap_indices=[1], tamper_target=1)
    res = run_alg1_detailed(models, ctx, 7, mixnet=mix)
    assert str(res.verdict) == "ServerFlagged(mix1)"
