"""Synthetic Gaussian-blob classification data and Dirichlet partitioning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Dataset:
    X: np.ndarray  # (N, d) float64
    y: np.ndarray  # (N,) int64
    means: np.ndarray  # (C, d) class centres of the generator
    noise_std: float

    @property
    def classes(self) -> int:
        return int(self.means.shape[0])

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    def __len__(self) -> int:
        return int(self.y.shape[0])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.means, self.noise_std)

    def sample_like(self, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Fresh features for ``labels`` from the same class-conditional law."""
        labels = np.asarray(labels, dtype=np.int64)
        return self.means[labels] + rng.normal(0.0, self.noise_std, size=(labels.size, self.dim))


def gen_synthetic(classes: int, dim: int, n_samples: int, seed: int,
                  mean_scale: float = 0.9, noise_std: float = 1.0, min_separation: float = 3.0) -> Dataset:
    """Balanced Gaussian blobs; class means ~ N(0, mean_scale^2 I).

    If two class means land closer than ``min_separation * noise_std``, all
    means are stretched about their centroid until the closest pair is
    exactly that far apart.
    """
    if classes < 2 or dim < 2:
        raise ValueError("need at least 2 classes and 2 dimensions")
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, mean_scale, size=(classes, dim))
    gaps = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=-1)
    closest = gaps[np.triu_indices(classes, 1)].min()
    if closest < min_separation * noise_std:
        centre = means.mean(axis=0)
        means = centre + (means - centre) * (min_separation * noise_std / max(closest, 1e-12))
    y = np.arange(n_samples, dtype=np.int64) % classes
    rng.shuffle(y)
    X = means[y] + rng.normal(0.0, noise_std, size=(n_samples, dim))
    return Dataset(X, y, means, noise_std)


@dataclass
class Partition:
    shards: list[np.ndarray]  # record indices per client
    owners: np.ndarray  # owner index per record
    alpha: float

    @property
    def n_clients(self) -> int:
        return len(self.shards)


def dirichlet_partition(ds: Dataset, n: int, alpha: float, seed: int, max_tries: int = 1000) -> Partition:
    """Split each class across ``n`` clients with proportions ~ Dirichlet(alpha).

    The draw is repeated whenever some client would end up with no records.
    """
    if n < 2:
        raise ValueError("need at least 2 clients")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    rng = np.random.default_rng(seed)
    by_class = [np.flatnonzero(ds.y == c) for c in range(ds.classes)]
    for _ in range(max_tries):
        owners = np.empty(len(ds), dtype=np.int64)
        for idx in by_class:
            idx = rng.permutation(idx)
            props = rng.dirichlet(np.full(n, alpha))
            cuts = (np.cumsum(props)[:-1] * idx.size).astype(np.int64)
            for client, part in enumerate(np.split(idx, cuts)):
                owners[part] = client
        counts = np.bincount(owners, minlength=n)
        if counts.min() > 0:
            shards = [np.flatnonzero(owners == i) for i in range(n)]
            return Partition(shards, owners, float(alpha))
    raise RuntimeError(f"could not give every client a record after {max_tries} draws")
