"""Sum-based aggregation (FedAvg, FedSGD) and clustered FedMedian."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import InvalidCluster
from .model import ModelParams, check_layouts


def order_free_sum(rows: np.ndarray) -> np.ndarray:
    """Column sums that do not depend on row order (rows sorted per column first)."""
    return np.sort(rows, axis=0).sum(axis=0)


def mean_rows(rows: np.ndarray) -> np.ndarray:
    """Order-free column means; constant columns are returned exactly."""
    ordered = np.sort(rows, axis=0)
    mean = ordered.sum(axis=0) / rows.shape[0]
    return np.where(ordered[0] == ordered[-1], ordered[0], mean)


def fedavg(models: Sequence[ModelParams], sizes: Sequence[float] | None = None) -> ModelParams:
    """Weighted mean ``sum_i (N_i / N) w_i``.

    Equal sizes (or ``sizes=None``) reduce to the plain mean.  Summation is
    independent of submission order, so any permutation of the inputs gives
    a bit-identical result.
    """
    layout = check_layouts(models)
    stacked = np.stack([m.flatten() for m in models])
    if sizes is None:
        return ModelParams.unflatten(layout, mean_rows(stacked))
    sizes = np.asarray(sizes, dtype=np.float64)
    if sizes.shape != (len(models),) or np.any(sizes <= 0):
        raise ValueError("sizes must be positive, one per model")
    if np.all(sizes == sizes[0]):
        return ModelParams.unflatten(layout, mean_rows(stacked))
    weights = sizes / sizes.sum()
    return ModelParams.unflatten(layout, order_free_sum(weights[:, None] * stacked))


def fedsgd_step(global_model: ModelParams, client_grads: Sequence[ModelParams],
                sizes: Sequence[float], lr: float) -> ModelParams:
    """One global SGD step with the size-weighted mean of client gradients."""
    layout = check_layouts([global_model, *client_grads])
    g = fedavg(client_grads, sizes).flatten()
    return ModelParams.unflatten(layout, global_model.flatten() - lr * g)


def clusters(n: int, k: int, rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Split ``n`` clients into ``n // k`` groups; the last group takes the remainder."""
    if k < 1 or k > n:
        raise InvalidCluster(f"cluster size {k} outside [1, {n}]")
    order = rng.permutation(n) if rng is not None else np.arange(n)
    groups = [order[i * k:(i + 1) * k] for i in range(n // k)]
    if n % k:
        groups[-1] = np.concatenate([groups[-1], order[(n // k) * k:]])
    return groups


def fedmedian_clustered(models: Sequence[ModelParams], k: int,
                        rng: np.random.Generator | None = None) -> ModelParams:
    """Elementwise median of per-cluster means.

    Grouping is decided by the clients (``rng``), never by the server; with
    ``rng=None`` clients are grouped in submission order.
    """
    layout = check_layouts(models)
    groups = clusters(len(models), k, rng)
    stacked = np.stack([m.flatten() for m in models])
    means = np.stack([mean_rows(stacked[g]) for g in groups])
    return ModelParams.unflatten(layout, np.median(means, axis=0))


__all__ = ["fedavg", "fedsgd_step", "fedmedian_clustered", "clusters", "mean_rows", "order_free_sum"]
