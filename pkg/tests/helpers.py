"""Shared test fixtures that need the package."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from rnsshuffle.fl.model import ModelParams, init_model

GOLDEN = Path(__file__).parent / "golden"


def random_models(rng: np.random.Generator, n: int, dim: int = 3, hidden: int = 4, classes: int = 3,
                  low: float = -0.999, high: float = 0.999) -> list[ModelParams]:
    """``n`` models sharing one layout, every scalar uniform in ``[low, high)``."""
    base = init_model(dim, hidden, classes, rng)
    return [ModelParams.unflatten(base.layout, rng.uniform(low, high, base.size)) for _ in range(n)]
