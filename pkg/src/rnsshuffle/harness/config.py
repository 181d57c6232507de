"""Experiment configuration: schema, loading, validation and hashing.

Config files are YAML (JSON is accepted too, being a YAML subset).  Every
file carries ``version: 1``; unknown keys are rejected.
"""

from __future__ import annotations

import copy
import dataclasses
import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..cost import cost_report
from ..errors import ConfigInvalid, InvalidContext
from ..mixnet import Trust
from ..rns import Strategy, select_moduli

CONFIG_VERSION = 1


class Defense(str, enum.Enum):
    NONE = "none"
    MODEL_SHUFFLE = "model_shuffle"
    LAYER_SHUFFLE = "layer_shuffle"
    PARAM_SHUFFLE = "param_shuffle"
    ALG1 = "alg1"
    ALG1_RLE = "alg1_rle"

    @property
    def bit_level(self) -> bool:
        return self in (Defense.ALG1, Defense.ALG1_RLE)


class Attack(str, enum.Enum):
    NONE = "none"
    SIA = "sia"
    RECON_MODEL = "recon_model"
    RECON_LAYER = "recon_layer"
    RECON_PARAM = "recon_param"


# each reconstruction only makes sense against its own shuffling granularity
RECON_TARGET = {
    Attack.RECON_MODEL: Defense.MODEL_SHUFFLE,
    Attack.RECON_LAYER: Defense.LAYER_SHUFFLE,
    Attack.RECON_PARAM: Defense.PARAM_SHUFFLE,
}


class Variant(str, enum.Enum):
    FEDAVG = "fedavg"
    FEDPROX = "fedprox"


@dataclass
class DatasetCfg:
    classes: int = 10
    dim: int = 50
    samples: int = 5000
    test_samples: int = 2000
    mean_scale: float = 0.9
    noise_std: float = 1.0


@dataclass
class TrainingCfg:
    global_rounds: int = 5
    local_epochs: int = 10
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    variant: Variant = Variant.FEDAVG
    prox_mu: float = 0.01


@dataclass
class DefenseCfg:
    kind: Defense = Defense.NONE
    r: int = 4
    strategy: Strategy = Strategy.CONSECUTIVE_PRIMES
    trust: Trust = Trust.SEMI
    mix_servers: int = 3
    trap_fraction: float = 0.01


@dataclass
class ShadowCfg:
    fraction: float = 0.05
    noise: float = 0.0


@dataclass
class ExperimentConfig:
    version: int = CONFIG_VERSION
    seed: int = 0
    n_clients: int = 10
    alpha: float = 0.1
    hidden: int = 32
    probes_per_round: int = 1000
    attack: Attack = Attack.SIA
    dataset: DatasetCfg = field(default_factory=DatasetCfg)
    training: TrainingCfg = field(default_factory=TrainingCfg)
    defense: DefenseCfg = field(default_factory=DefenseCfg)
    shadow: ShadowCfg = field(default_factory=ShadowCfg)
    output_dir: str = "runs/default"

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def replace(self, **changes) -> "ExperimentConfig":
        out = copy.deepcopy(self)
        for key, value in changes.items():
            target = out
            *path, last = key.split(".")
            for part in path:
                target = getattr(target, part)
            current = getattr(target, last)
            if isinstance(current, enum.Enum):
                value = type(current)(value)
            elif isinstance(current, float) and isinstance(value, int):
                value = float(value)
            setattr(target, last, value)
        return out

    def config_hash(self) -> str:
        """Digest of everything except where outputs go."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


def _build(cls, data: dict, where: str, errors: list[str]):
    if not isinstance(data, dict):
        errors.append(f"{where or 'config'}: expected a mapping")
        return cls()
    kwargs: dict[str, Any] = {}
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in data.items():
        path = f"{where}.{key}" if where else key
        if key not in fields:
            errors.append(f"{path}: unknown key")
            continue
        default = getattr(cls(), key)
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, path, errors)
        elif isinstance(default, enum.Enum):
            try:
                kwargs[key] = type(default)(value)
            except ValueError:
                allowed = ", ".join(e.value for e in type(default))
                errors.append(f"{path}: {value!r} is not one of {allowed}")
        elif isinstance(default, bool) or not isinstance(value, (int, float, str)) or isinstance(value, bool):
            errors.append(f"{path}: unsupported value {value!r}")
        elif isinstance(default, int) and not isinstance(value, int):
            errors.append(f"{path}: expected an integer, got {value!r}")
        elif isinstance(default, float) and not isinstance(value, (int, float)):
            errors.append(f"{path}: expected a number, got {value!r}")
        elif isinstance(default, str) and not isinstance(value, str):
            errors.append(f"{path}: expected a string, got {value!r}")
        else:
            kwargs[key] = float(value) if isinstance(default, float) else value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    errors: list[str] = []
    data = dict(data or {})
    version = data.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigInvalid(f"unsupported config version {version!r}", [f"version: expected {CONFIG_VERSION}"])
    cfg = _build(ExperimentConfig, data, "", errors)
    if errors:
        raise ConfigInvalid("; ".join(errors), errors)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}", [str(exc)]) from exc
    return config_from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


@dataclass
class Diagnostics:
    errors: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate(cfg: ExperimentConfig) -> Diagnostics:
    """Static checks; never raises and never touches the filesystem."""
    diag = Diagnostics()
    err = diag.errors.append

    def positive(path: str, value, strict: bool = True):
        if (value <= 0) if strict else (value < 0):
            err(f"{path}: must be {'positive' if strict else 'non-negative'}, got {value}")

    if cfg.n_clients < 2:
        err(f"n_clients: need at least 2 clients, got {cfg.n_clients}")
    positive("alpha", cfg.alpha)
    positive("hidden", cfg.hidden)
    positive("probes_per_round", cfg.probes_per_round)
    ds, tr, de, sh = cfg.dataset, cfg.training, cfg.defense, cfg.shadow
    if ds.classes < 2:
        err(f"dataset.classes: need at least 2, got {ds.classes}")
    if ds.dim < 2:
        err(f"dataset.dim: need at least 2, got {ds.dim}")
    if ds.samples < max(cfg.n_clients, 1):
        err(f"dataset.samples: need at least one record per client, got {ds.samples}")
    positive("dataset.test_samples", ds.test_samples)
    positive("dataset.mean_scale", ds.mean_scale, strict=False)
    positive("dataset.noise_std", ds.noise_std)
    positive("training.global_rounds", tr.global_rounds)
    positive("training.local_epochs", tr.local_epochs)
    positive("training.lr", tr.lr)
    if not 0 <= tr.momentum < 1:
        err(f"training.momentum: must lie in [0, 1), got {tr.momentum}")
    positive("training.batch_size", tr.batch_size)
    positive("training.prox_mu", tr.prox_mu, strict=False)
    if not 0 < sh.fraction <= 1:
        err(f"shadow.fraction: must lie in (0, 1], got {sh.fraction}")
    positive("shadow.noise", sh.noise, strict=False)

    if cfg.attack in RECON_TARGET and de.kind is not RECON_TARGET[cfg.attack]:
        err(f"attack: {cfg.attack.value} needs defense.kind={RECON_TARGET[cfg.attack].value}, got {de.kind.value}")
    if de.r < 1:
        err(f"defense.r: precision must be at least 1, got {de.r}")
    if de.kind.bit_level:
        if de.kind is Defense.ALG1_RLE and de.trust is not Trust.FULL:
            err("defense.trust: the run-length variant needs a fully trusted shuffler (trust=full)")
        if de.trust is not Trust.FULL:
            if de.mix_servers < 1:
                err(f"defense.mix_servers: need at least 1, got {de.mix_servers}")
            if not 0 < de.trap_fraction <= 1:
                err(f"defense.trap_fraction: must lie in (0, 1], got {de.trap_fraction}")
        if de.r >= 1 and cfg.n_clients >= 1:
            try:
                ctx = select_moduli(cfg.n_clients, de.r, de.strategy)
                rep = cost_report(ctx)
                diag.notes.append(
                    f"moduli {list(ctx.moduli)} admissible for n={cfg.n_clients}, r={de.r}; "
                    f"alg1 {rep.bits['alg1']} bits, alg1_rle {rep.bits['alg1_rle']} bits, "
                    f"{rep.shuffle_rounds} shuffle rounds per parameter"
                )
            except (InvalidContext, ValueError) as exc:
                err(f"defense: no admissible moduli ({exc})")
    return diag


def require_valid(cfg: ExperimentConfig) -> None:
    diag = validate(cfg)
    if not diag.ok:
        raise ConfigInvalid("; ".join(diag.errors), diag.errors)
