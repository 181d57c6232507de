"""One federated run: training, the configured defense, and the configured attack.

A single experiment seed fans out into labelled streams so that changing one
stage (say, the attacker's probes) leaves every other stage untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import attacks
from .cost import VANILLA_BITS, cost_alg1, cost_alg1_rle
from .fl.aggregate import fedavg
from .fl.data import Dataset, Partition, dirichlet_partition, gen_synthetic
from .fl.model import ModelParams, eval_accuracy, init_model
from .fl.train import train_local
from .harness.config import Attack, Defense, ExperimentConfig, Variant, require_valid
from .mixnet import MixnetConfig, Trust, select_traps
from .rns import RnsContext, select_moduli
from .shuffle import (
    LayerView,
    ParameterView,
    aggregate_submission,
    run_alg1_detailed,
    run_alg1_rle_detailed,
    shuffle_layers,
    shuffle_models,
    shuffle_parameters,
)

STREAMS = {
    "data": 1, "partition": 2, "init": 3, "train": 4, "shuffle": 5,
    "probe": 6, "guess": 7, "shadow": 8, "test": 9, "mixnet": 10,
}


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng([seed, STREAMS[name], *extra])


def derived_seed(seed: int, name: str, *extra: int) -> int:
    return int(np.random.SeedSequence([seed, STREAMS[name], *extra]).generate_state(1)[0])


@dataclass
class ServerView:
    """Everything the server (and hence the attacker) receives in one round."""

    defense: Defense
    aggregate: ModelParams
    models: list[ModelParams] | None = None
    layers: LayerView | None = None
    params: ParameterView | None = None
    verdict: str = "Ok"


@dataclass
class RoundRecord:
    round: int
    model_accuracy: float
    sia_success: float | None
    bits_per_param: int
    verdict: str
    outcome: attacks.AttackOutcome | None = None
    probe_ids: np.ndarray | None = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rounds: list[RoundRecord]
    final_accuracy: float
    context: RnsContext | None
    shadow_evals: int = 0
    extras: dict = field(default_factory=dict)

    def best_round(self) -> RoundRecord | None:
        """Round with the highest SIA success; the earliest one on ties."""
        scored = [r for r in self.rounds if r.sia_success is not None]
        return max(scored, key=lambda r: r.sia_success) if scored else None


def _balanced_labels(classes: int, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(n, dtype=np.int64) % classes)


def setup_data(cfg: ExperimentConfig) -> tuple[Dataset, Partition, Dataset]:
    d = cfg.dataset
    ds = gen_synthetic(d.classes, d.dim, d.samples, derived_seed(cfg.seed, "data"), d.mean_scale, d.noise_std)
    part = dirichlet_partition(ds, cfg.n_clients, cfg.alpha, derived_seed(cfg.seed, "partition"))
    rng = stream(cfg.seed, "test")
    labels = _balanced_labels(d.classes, d.test_samples, rng)
    test = Dataset(ds.sample_like(labels, rng), labels, ds.means, ds.noise_std)
    return ds, part, test


def _mixnet(cfg: ExperimentConfig, param_count: int) -> MixnetConfig | None:
    de = cfg.defense
    if de.trust is Trust.FULL:
        return None
    traps = select_traps(param_count, de.trap_fraction, derived_seed(cfg.seed, "mixnet"))
    return MixnetConfig.build(de.mix_servers, de.trust, trap_indices=traps.tolist(),
                              seed=derived_seed(cfg.seed, "mixnet", 1))


def apply_defense(cfg: ExperimentConfig, locals_: list[ModelParams], t: int,
                  ctx: RnsContext | None) -> ServerView:
    kind = cfg.defense.kind
    seed = derived_seed(cfg.seed, "shuffle", t)
    if kind is Defense.NONE:
        return ServerView(kind, fedavg(locals_), models=list(locals_))
    if kind is Defense.MODEL_SHUFFLE:
        sub = shuffle_models(locals_, seed)
        return ServerView(kind, aggregate_submission(sub), models=sub.payload)
    if kind is Defense.LAYER_SHUFFLE:
        sub = shuffle_layers(locals_, seed)
        return ServerView(kind, aggregate_submission(sub), layers=sub.payload)
    if kind is Defense.PARAM_SHUFFLE:
        sub = shuffle_parameters(locals_, seed)
        return ServerView(kind, aggregate_submission(sub), params=sub.payload)
    assert ctx is not None
    if kind is Defense.ALG1:
        res = run_alg1_detailed(locals_, ctx, seed, mixnet=_mixnet(cfg, locals_[0].size))
    else:
        res = run_alg1_rle_detailed(locals_, ctx, seed)
    return ServerView(kind, res.aggregate, verdict=str(res.verdict))


def _positional_models(view: ServerView) -> list[ModelParams]:
    """What a naive attacker makes of a shuffled view: candidate k from the k-th slot of everything."""
    if view.models is not None:
        return list(view.models)
    if view.layers is not None:
        lv = view.layers
        n = len(next(iter(lv.layers.values())))
        return [ModelParams.unflatten(lv.layout, np.concatenate([v[k] for v in lv.layers.values()]))
                for k in range(n)]
    if view.params is not None:
        return [ModelParams.unflatten(view.params.layout, row) for row in view.params.values]
    return [view.aggregate]


def attack_candidates(cfg: ExperimentConfig, view: ServerView,
                      shadows: list[attacks.ShadowDataset]) -> tuple[list[ModelParams], list[int], int]:
    """Candidate models with the client label the attacker attaches, plus shadow evaluation count."""
    kind = cfg.attack
    if kind is Attack.SIA:
        models = _positional_models(view)
        return models, list(range(len(models))), 0
    cands, evals = [], 0
    for sh in shadows:
        oracle = attacks.AccuracyOracle.of(sh)
        if kind is Attack.RECON_MODEL:
            cands.append(attacks.recon_model(view.models, sh, oracle))
        elif kind is Attack.RECON_LAYER:
            cands.append(attacks.recon_layer(view.layers.layout, view.layers.layers, sh, oracle))
        else:
            k = view.aggregate.final_flat().size
            cands.append(attacks.recon_param(view.aggregate, view.params.values[:, -k:], sh, oracle))
        evals += oracle.record_evals
    return cands, [sh.target_client for sh in shadows], evals


def bits_per_param(cfg: ExperimentConfig, ctx: RnsContext | None) -> int:
    if cfg.defense.kind is Defense.ALG1:
        return cost_alg1(ctx)
    if cfg.defense.kind is Defense.ALG1_RLE:
        return cost_alg1_rle(ctx)
    return VANILLA_BITS


def simulate(cfg: ExperimentConfig) -> ExperimentResult:
    require_valid(cfg)
    ds, part, test = setup_data(cfg)
    n, tr = cfg.n_clients, cfg.training
    ctx = select_moduli(n, cfg.defense.r, cfg.defense.strategy) if cfg.defense.kind.bit_level else None
    g = init_model(ds.dim, cfg.hidden, ds.classes, stream(cfg.seed, "init"))
    shadows = []
    if cfg.attack in (Attack.RECON_MODEL, Attack.RECON_LAYER, Attack.RECON_PARAM):
        shadows = [attacks.build_shadow(ds, part, x, cfg.shadow.fraction, cfg.shadow.noise,
                                        derived_seed(cfg.seed, "shadow")) for x in range(n)]
    prox = tr.prox_mu if tr.variant is Variant.FEDPROX else None
    n_probes = min(cfg.probes_per_round, len(ds))
    records, total_evals = [], 0
    for t in range(tr.global_rounds):
        locals_ = [
            train_local(g, ds.X[s], ds.y[s], tr.local_epochs, tr.lr, tr.momentum, tr.batch_size, prox,
                        stream(cfg.seed, "train", t, i))
            for i, s in enumerate(part.shards)
        ]
        view = apply_defense(cfg, locals_, t, ctx)
        g = view.aggregate
        sia, outcome, probe = None, None, None
        if cfg.attack is not Attack.NONE:
            probe = np.sort(stream(cfg.seed, "probe", t).choice(len(ds), n_probes, replace=False))
            cands, labels, evals = attack_candidates(cfg, view, shadows)
            total_evals += evals
            guesses = attacks.sia_guesses(cands, ds.X[probe], ds.y[probe], n, stream(cfg.seed, "guess", t), labels)
            outcome = attacks.AttackOutcome(guesses, part.owners[probe], n, t)
            sia = outcome.success_rate
        records.append(RoundRecord(t, eval_accuracy(g, test), sia, bits_per_param(cfg, ctx), view.verdict,
                                   outcome, probe))
    return ExperimentResult(cfg, records, records[-1].model_accuracy, ctx, total_evals)


def run_sia_experiment(cfg: ExperimentConfig) -> attacks.AttackOutcome | None:
    """Best-round attack outcome (the highest per-round success rate)."""
    best = simulate(cfg).best_round()
    return best.outcome if best is not None else None
