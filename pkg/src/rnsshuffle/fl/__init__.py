"""Federated-learning substrate: data, model, local training, aggregation."""

from .aggregate import clusters, fedavg, fedmedian_clustered, fedsgd_step
from .data import Dataset, Partition, dirichlet_partition, gen_synthetic
from .model import (
    ModelParams,
    check_layouts,
    clip_params,
    eval_accuracy,
    init_model,
    logits,
    mean_loss,
    per_record_loss,
)
from .train import gradients, train_local

__all__ = [
    "Dataset", "Partition", "ModelParams", "gen_synthetic", "dirichlet_partition", "init_model",
    "train_local", "gradients", "clip_params", "fedavg", "fedsgd_step", "fedmedian_clustered",
    "clusters", "eval_accuracy", "per_record_loss", "mean_loss", "logits", "check_layouts",
]
