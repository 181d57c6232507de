"""Local client training: mini-batch SGD with momentum on cross-entropy."""

from __future__ import annotations

import numpy as np

from .model import ModelParams, clip_params, log_softmax


def gradients(m: ModelParams, X: np.ndarray, y: np.ndarray) -> dict[str, np.ndarray]:
    """Gradient of the mean cross-entropy over ``(X, y)``."""
    W1, b1 = m.tensors["fc1.weight"], m.tensors["fc1.bias"]
    W2 = m.tensors["fc2.weight"]
    pre = X @ W1 + b1
    H = np.maximum(pre, 0.0)
    z = H @ W2 + m.tensors["fc2.bias"]
    P = np.exp(log_softmax(z))
    P[np.arange(len(y)), y] -= 1.0
    dz = P / len(y)
    dH = (dz @ W2.T) * (pre > 0)
    return {
        "fc1.weight": X.T @ dH,
        "fc1.bias": dH.sum(axis=0),
        "fc2.weight": H.T @ dz,
        "fc2.bias": dz.sum(axis=0),
    }


def train_local(init: ModelParams, X: np.ndarray, y: np.ndarray, epochs: int = 10, lr: float = 0.01,
                momentum: float = 0.9, batch_size: int = 64, prox_mu: float | None = None,
                rng: np.random.Generator | None = None) -> ModelParams:
    """Train a copy of ``init`` on one client's shard and clip the result.

    With ``prox_mu`` set, the FedProx term ``mu/2 * ||w - init||^2`` is added
    to the local objective.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    w = init.copy()
    velocity = {k: np.zeros_like(v) for k, v in w.tensors.items()}
    n = len(y)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            grads = gradients(w, X[batch], y[batch])
            for k, g in grads.items():
                if prox_mu:
                    g = g + prox_mu * (w.tensors[k] - init.tensors[k])
                velocity[k] = momentum * velocity[k] + g
                w.tensors[k] = w.tensors[k] - lr * velocity[k]
    return clip_params(w)
