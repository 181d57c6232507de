"""Two-layer perceptron parameters, forward pass and evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..errors import LayoutMismatch

CLIP_EPS = 1e-6


@dataclass
class ModelParams:
    """Ordered named tensors of a d -> h -> C perceptron.

    Tensor names are ``<layer>.weight`` / ``<layer>.bias``; a *layer* (the unit
    of layer-level shuffling) is the pair sharing a prefix.  The last layer is
    the classifier head that the final-layer reconstruction attacks target.
    """

    tensors: dict[str, np.ndarray]

    @property
    def layout(self) -> tuple[tuple[str, tuple[int, ...]], ...]:
        return tuple((name, tuple(t.shape)) for name, t in self.tensors.items())

    @property
    def size(self) -> int:
        return sum(t.size for t in self.tensors.values())

    @property
    def layer_names(self) -> list[str]:
        names: list[str] = []
        for key in self.tensors:
            layer = key.rsplit(".", 1)[0]
            if layer not in names:
                names.append(layer)
        return names

    @property
    def final_layer(self) -> str:
        return self.layer_names[-1]

    def layer_keys(self, layer: str) -> list[str]:
        return [k for k in self.tensors if k.rsplit(".", 1)[0] == layer]

    def flatten(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors.values()])

    @classmethod
    def unflatten(cls, layout, flat: np.ndarray) -> "ModelParams":
        flat = np.asarray(flat, dtype=np.float64)
        total = sum(int(np.prod(shape)) for _, shape in layout)
        if flat.size != total:
            raise LayoutMismatch(f"flat vector of {flat.size} values does not fit layout of {total}")
        tensors, offset = {}, 0
        for name, shape in layout:
            k = int(np.prod(shape))
            tensors[name] = flat[offset:offset + k].reshape(shape).copy()
            offset += k
        return cls(tensors)

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.tensors.items()})

    def layer_flat(self, layer: str) -> np.ndarray:
        return np.concatenate([self.tensors[k].ravel() for k in self.layer_keys(layer)])

    def with_layer_flat(self, layer: str, flat: np.ndarray) -> "ModelParams":
        out = self.copy()
        offset = 0
        for k in self.layer_keys(layer):
            t = out.tensors[k]
            out.tensors[k] = np.asarray(flat[offset:offset + t.size], dtype=np.float64).reshape(t.shape).copy()
            offset += t.size
        if offset != len(flat):
            raise LayoutMismatch(f"layer {layer} expects {offset} values, got {len(flat)}")
        return out

    def final_flat(self) -> np.ndarray:
        return self.layer_flat(self.final_layer)

    def replace_final(self, index: int, value: float) -> "ModelParams":
        """Copy with the ``index``-th scalar of the final layer set to ``value``."""
        out = ModelParams(dict(self.tensors))
        offset = 0
        for k in self.layer_keys(self.final_layer):
            t = self.tensors[k]
            if index < offset + t.size:
                new = t.copy()
                new.flat[index - offset] = value
                out.tensors[k] = new
                return out
            offset += t.size
        raise IndexError(f"final layer has {offset} parameters, index {index} out of range")

    def equals(self, other: "ModelParams") -> bool:
        return self.layout == other.layout and all(
            np.array_equal(a, b) for a, b in zip(self.tensors.values(), other.tensors.values())
        )


def check_layouts(models: Iterable[ModelParams]) -> tuple:
    models = list(models)
    if not models:
        raise ValueError("need at least one model")
    layout = models[0].layout
    for m in models[1:]:
        if m.layout != layout:
            raise LayoutMismatch(f"layout {m.layout} differs from {layout}")
    return layout


def init_model(dim: int, hidden: int, classes: int, rng: np.random.Generator) -> ModelParams:
    """Uniform fan-in initialisation; all values stay well inside (-1, 1)."""

    def uniform(fan_in, shape):
        bound = min(1.0 / np.sqrt(fan_in), 0.5)
        return rng.uniform(-bound, bound, size=shape)

    return ModelParams({
        "fc1.weight": uniform(dim, (dim, hidden)),
        "fc1.bias": uniform(dim, (hidden,)),
        "fc2.weight": uniform(hidden, (hidden, classes)),
        "fc2.bias": uniform(hidden, (classes,)),
    })


def hidden(m: ModelParams, X: np.ndarray) -> np.ndarray:
    return np.maximum(X @ m.tensors["fc1.weight"] + m.tensors["fc1.bias"], 0.0)


def logits(m: ModelParams, X: np.ndarray) -> np.ndarray:
    return hidden(m, X) @ m.tensors["fc2.weight"] + m.tensors["fc2.bias"]


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def per_record_loss(m: ModelParams, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Cross-entropy of each record."""
    lp = log_softmax(logits(m, X))
    return -lp[np.arange(len(y)), y]


def mean_loss(m: ModelParams, X: np.ndarray, y: np.ndarray) -> float:
    return float(per_record_loss(m, X, y).mean())


def eval_accuracy(m: ModelParams, X, y: np.ndarray | None = None) -> float:
    """Top-1 accuracy on ``(X, y)`` or on any object with ``X``/``y`` arrays.

    Ties in the logits go to the lowest class index.
    """
    if y is None:
        X, y = X.X, X.y
    if len(y) == 0:
        return 0.0
    return float(np.mean(np.argmax(logits(m, X), axis=1) == y))


def clip_params(m: ModelParams, eps: float = CLIP_EPS) -> ModelParams:
    """Clamp every scalar into [-1 + eps, 1 - eps]."""
    lo, hi = -1.0 + eps, 1.0 - eps
    return ModelParams({k: np.clip(v, lo, hi) for k, v in m.tensors.items()})
