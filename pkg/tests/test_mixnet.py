import math
from collections import Counter

import numpy as np
import pytest
from scipy.stats import chisquare

from rnsshuffle.errors import ConfigInvalid
from rnsshuffle.mixnet import Behavior, Message, MixnetConfig, MixServer, core, mixnet_route, seal, select_traps, unseal


def msgs(k=3, param=0):
    return [Message(param, bytes([i])) for i in range(k)]


def order_counts(cfg, trials=6000):
    counts = Counter()
    for seed in range(trials):
        out, verdict = mixnet_route(msgs(), cfg, seed)
        assert verdict.ok
        counts[tuple(m.payload[0] for m in out)] += 1
    return counts


@pytest.mark.parametrize("trust", ["full", "semi", "malicious"])
def test_honest_route_preserves_multiset(trust):
    cfg = MixnetConfig.build(3, trust, trap_indices=[0])
    inp = [Message(i % 4, bytes([i, 255 - i])) for i in range(40)]
    out, verdict = mixnet_route(inp, cfg, 1)
    assert verdict.ok
    assert Counter(out) == Counter(inp)


def test_honest_composite_permutation_uniform():
    counts = order_counts(MixnetConfig.build(3, "semi"))
    assert len(counts) == 6
    assert chisquare(list(counts.values())).pvalue > 0.001


@pytest.mark.parametrize("position", [0, 1, 2])
def test_single_identity_server_still_uniform(position):
    behaviors = ["honest"] * 3
    behaviors[position] = "identity"
    counts = order_counts(MixnetConfig.build(3, "semi", behaviors=behaviors))
    assert len(counts) == 6
    assert chisquare(list(counts.values())).pvalue > 0.001


def test_one_honest_server_is_enough():
    cfg = MixnetConfig.build(3, "semi", behaviors=["identity", "honest", "identity"])
    counts = order_counts(cfg)
    assert chisquare(list(counts.values())).pvalue > 0.001


@pytest.mark.parametrize("tamperer", [0, 1, 2])
def test_tampering_on_trap_flags_that_server(tamperer):
    behaviors = ["honest"] * 3
    behaviors[tamperer] = "tamper"
    cfg = MixnetConfig.build(3, "malicious", behaviors=behaviors, trap_indices=[5], tamper_target=5)
    inp = [Message(5, bytes([7]))] + msgs(4, param=2)
    _, verdict = mixnet_route(inp, cfg, 0)
    assert not verdict.ok
    assert str(verdict) == f"ServerFlagged(mix{tamperer})"


def test_tampering_off_trap_goes_unnoticed():
    cfg = MixnetConfig.build(3, "malicious", behaviors=["tamper"], trap_indices=[5], tamper_target=2)
    inp = [Message(5, bytes([7]))] + msgs(4, param=2)
    out, verdict = mixnet_route(inp, cfg, 0)
    assert verdict.ok
    assert Counter(out) != Counter(inp)


def test_semi_honest_mode_does_not_check():
    cfg = MixnetConfig.build(2, "semi", behaviors=["tamper"], trap_indices=[0], tamper_target=0)
    _, verdict = mixnet_route(msgs(), cfg, 0)
    assert verdict.ok


def test_route_is_deterministic():
    cfg = MixnetConfig.build(3, "malicious", trap_indices=[0])
    assert mixnet_route(msgs(8), cfg, 4) == mixnet_route(msgs(8), cfg, 4)


def test_onion_layers_strip_in_order():
    cfg = MixnetConfig.build(3)
    env = seal(Message(1, b"x"), cfg.servers)
    for depth, server in enumerate(cfg.servers):
        env = unseal(env, server, depth)
    assert env == Message(1, b"x")
    with pytest.raises(ValueError):
        unseal(seal(Message(1, b"x"), cfg.servers), cfg.servers[1], 0)
    assert core(seal(Message(2, b"y"), cfg.servers)) == Message(2, b"y")


def test_config_requires_an_honest_server():
    with pytest.raises(ConfigInvalid):
        MixnetConfig.build(2, behaviors=["identity", "tamper"])
    with pytest.raises(ConfigInvalid):
        MixnetConfig([])
    key = b"k" * 16
    with pytest.raises(ConfigInvalid):
        MixnetConfig([MixServer("a", key), MixServer("a", key)])


def test_adversarial_mask():
    cfg = MixnetConfig.build(3, behaviors=["honest", "identity"])
    assert cfg.adversarial_mask == [False, True, False]
    assert cfg.servers[1].behavior is Behavior.IDENTITY


def test_trap_indices_checked_against_parameter_count():
    cfg = MixnetConfig.build(2, trap_indices=[3, 9])
    cfg.validate(10)
    with pytest.raises(ConfigInvalid):
        cfg.validate(9)


def test_select_traps_cnn_count():
    traps = select_traps(940362, 0.01, seed=0)
    assert traps.size == math.ceil(0.01 * 940362) == 9404
    assert np.unique(traps).size == traps.size
    assert traps.min() >= 0 and traps.max() < 940362


def test_select_traps_full_and_reproducible():
    assert select_traps(50, 1.0, seed=3).tolist() == list(range(50))
    assert np.array_equal(select_traps(1000, 0.1, 7), select_traps(1000, 0.1, 7))
    assert not np.array_equal(select_traps(1000, 0.1, 7), select_traps(1000, 0.1, 8))


@pytest.mark.parametrize("fraction", [0.0, -0.1, 1.5])
def test_select_traps_fraction_bounds(fraction):
    with pytest.raises(ValueError):
        select_traps(10, fraction, 0)
