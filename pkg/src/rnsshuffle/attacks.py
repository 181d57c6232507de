"""Source inference and the reconstruction attacks that undo shuffling.

The attacker compares per-record cross-entropy across candidate models and
names the candidate with the lowest loss.  Shuffling removes the labels; the
reconstruction attacks recover, for each target client, the candidate (model,
final layer, or final-layer parameter) that scores best on a shadow set
distributed like that client's data.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .fl.aggregate import mean_rows
from .fl.data import Dataset, Partition
from .fl.model import ModelParams, check_layouts, hidden, per_record_loss
from .errors import LayoutMismatch


class ShadowKind(str, enum.Enum):
    CLEAN = "clean"
    NOISY = "noisy"


@dataclass(frozen=True)
class Provenance:
    kind: ShadowKind
    fraction: float
    noise_kind: str | None = None
    level: float = 0.0


@dataclass
class ShadowDataset:
    target_client: int
    X: np.ndarray
    y: np.ndarray
    provenance: Provenance

    def __len__(self) -> int:
        return int(self.y.shape[0])


def shadow_size(shard_size: int, fraction: float) -> int:
    return math.ceil(Fraction(str(fraction)) * shard_size)


def build_shadow(ds: Dataset, partition: Partition, target: int, fraction: float,
                 noise_level: float = 0.0, seed: int = 0) -> ShadowDataset:
    """Fresh records following the target's label mix and the generator's class laws.

    Records are newly sampled, so they never coincide with training records.
    A positive ``noise_level`` adds Gaussian feature noise of that scale.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    if noise_level < 0:
        raise ValueError("noise level must be non-negative")
    shard = partition.shards[target]
    rng = np.random.default_rng([seed, target])
    k = shadow_size(len(shard), fraction)
    labels = rng.choice(ds.y[shard], size=k, replace=True)
    X = ds.sample_like(labels, rng)
    if noise_level > 0:
        X = X + rng.normal(0.0, noise_level, size=X.shape)
        prov = Provenance(ShadowKind.NOISY, fraction, "gaussian", float(noise_level))
    else:
        prov = Provenance(ShadowKind.CLEAN, fraction)
    return ShadowDataset(target, X, labels.astype(np.int64), prov)


class AccuracyOracle:
    """Shadow-set accuracy with evaluation counters.

    Hidden activations are cached per first-layer tensor object, so candidates
    that share the first layer only pay for the head.  Results are identical
    to :func:`rnsshuffle.fl.model.eval_accuracy`.
    """

    def __init__(self, X: np.ndarray, y: np.ndarray):
        self.X, self.y = X, y
        self.calls = 0
        self.record_evals = 0
        self._key: tuple | None = None
        self._H: np.ndarray | None = None

    @classmethod
    def of(cls, shadow: ShadowDataset) -> "AccuracyOracle":
        return cls(shadow.X, shadow.y)

    def __call__(self, m: ModelParams) -> float:
        self.calls += 1
        self.record_evals += len(self.y)
        if len(self.y) == 0:
            return 0.0
        W1, b1 = m.tensors["fc1.weight"], m.tensors["fc1.bias"]
        if self._key is None or self._key[0] is not W1 or self._key[1] is not b1:
            self._key, self._H = (W1, b1), hidden(m, self.X)
        z = self._H @ m.tensors["fc2.weight"] + m.tensors["fc2.bias"]
        return float(np.mean(np.argmax(z, axis=1) == self.y))


def _oracle(shadow, oracle):
    return oracle if oracle is not None else AccuracyOracle.of(shadow)


def _argmax_first(scores) -> int:
    best, best_i = -math.inf, 0
    for i, s in enumerate(scores):
        if s > best:
            best, best_i = s, i
    return best_i


def recon_model(shuffled: Sequence[ModelParams], shadow: ShadowDataset,
                oracle: AccuracyOracle | None = None) -> ModelParams:
    """The shuffled model with the highest shadow accuracy (first one on ties)."""
    if not shuffled:
        raise ValueError("need at least one model")
    acc = _oracle(shadow, oracle)
    return shuffled[_argmax_first(acc(m) for m in shuffled)]


def _con(layout, layer_values: Mapping[str, np.ndarray]) -> ModelParams:
    flat = np.concatenate([layer_values[name] for name in _layer_order(layout)])
    return ModelParams.unflatten(layout, flat)


def _layer_order(layout) -> list[str]:
    names: list[str] = []
    for key, _ in layout:
        layer = key.rsplit(".", 1)[0]
        if layer not in names:
            names.append(layer)
    return names


def recon_layer(layout, layers: Mapping[str, Sequence[np.ndarray]], shadow: ShadowDataset,
                oracle: AccuracyOracle | None = None) -> ModelParams:
    """Average every non-final layer, then try each candidate final layer."""
    order = _layer_order(layout)
    if list(layers) != order:
        raise LayoutMismatch(f"layers {list(layers)} do not match layout {order}")
    counts = {len(v) for v in layers.values()}
    if len(counts) != 1 or 0 in counts:
        raise LayoutMismatch("every layer needs the same positive number of candidates")
    final = order[-1]
    base = {name: mean_rows(np.stack(layers[name])) for name in order[:-1]}
    first = _con(layout, {**base, final: layers[final][0]})
    shared = {k: v for k, v in first.tensors.items() if not k.startswith(final + ".")}
    candidates = [first] + [
        ModelParams({**shared, **_split_final(first, final, f)}) for f in layers[final][1:]
    ]
    acc = _oracle(shadow, oracle)
    return candidates[_argmax_first(acc(m) for m in candidates)]


def _split_final(template: ModelParams, final: str, flat: np.ndarray) -> dict[str, np.ndarray]:
    out, offset = {}, 0
    for k in template.layer_keys(final):
        t = template.tensors[k]
        out[k] = np.asarray(flat[offset:offset + t.size], dtype=np.float64).reshape(t.shape)
        offset += t.size
    if offset != len(flat):
        raise LayoutMismatch(f"final layer expects {offset} values, got {len(flat)}")
    return out


def recon_param(global_model: ModelParams, shuffled_final: np.ndarray, shadow: ShadowDataset,
                oracle: AccuracyOracle | None = None) -> ModelParams:
    """Per final-layer index, keep the candidate value that maximises shadow accuracy.

    ``shuffled_final`` has shape ``(n, k)``: column ``i`` holds the shuffled
    candidates for final-layer parameter ``i``.  Each candidate is scored by
    substituting it into the global model alone; winners accumulate into the
    returned model.
    """
    vals = np.asarray(shuffled_final, dtype=np.float64)
    k = global_model.final_flat().size
    if vals.ndim != 2 or vals.shape[1] != k or vals.shape[0] < 1:
        raise LayoutMismatch(f"expected an (n, {k}) candidate array, got {vals.shape}")
    acc = _oracle(shadow, oracle)
    result = global_model.final_flat().copy()
    for i in range(k):
        j = _argmax_first(acc(global_model.replace_final(i, v)) for v in vals[:, i])
        result[i] = vals[j, i]
    return global_model.with_layer_flat(global_model.final_layer, result)


# ------------------------------------------------------------------ SIA


def _all_identical(models: Sequence[ModelParams]) -> bool:
    return all(m.equals(models[0]) for m in models[1:])


def sia_guesses(candidates: Sequence[ModelParams], X: np.ndarray, y: np.ndarray, n_clients: int,
                rng: np.random.Generator, labels: Sequence[int] | None = None) -> np.ndarray:
    """Owner guess per record: label of the lowest-loss candidate.

    With a single candidate, or bit-identical candidates, nothing separates
    the clients and each guess is uniform over ``range(n_clients)``.
    """
    if not candidates:
        raise ValueError("need at least one candidate")
    labels = np.arange(len(candidates)) if labels is None else np.asarray(labels, dtype=np.int64)
    if len(candidates) == 1 or _all_identical(candidates):
        return rng.integers(n_clients, size=len(y))
    check_layouts(candidates)
    losses = np.stack([per_record_loss(m, X, y) for m in candidates])
    return labels[np.argmin(losses, axis=0)]


def sia_attack(candidates: Sequence[ModelParams], x: np.ndarray, y: int, n_clients: int,
               rng: np.random.Generator, labels: Sequence[int] | None = None) -> int:
    return int(sia_guesses(candidates, np.asarray(x)[None, :], np.array([y]), n_clients, rng, labels)[0])


def binomial_ci(n_probes: int, p: float, level: float = 0.99) -> tuple[float, float]:
    """Two-sided acceptance interval for a success rate when the true rate is ``p``."""
    lo, hi = stats.binom.interval(level, n_probes, p)
    return float(lo) / n_probes, float(hi) / n_probes


@dataclass
class AttackOutcome:
    per_record_guess: np.ndarray
    true_owner: np.ndarray
    n_clients: int
    round: int = 0

    @property
    def n_probes(self) -> int:
        return int(len(self.true_owner))

    @property
    def correct(self) -> np.ndarray:
        return np.asarray(self.per_record_guess) == np.asarray(self.true_owner)

    @property
    def success_rate(self) -> float:
        return float(self.correct.mean()) if self.n_probes else 0.0

    @property
    def baseline_random(self) -> float:
        return 1.0 / self.n_clients

    def random_guess_ci(self, level: float = 0.99) -> tuple[float, float]:
        return binomial_ci(self.n_probes, self.baseline_random, level)
