"""From-scratch PNA graph regressor on a small numpy autodiff."""

from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    GraphBatch,
    PnaLayerConfig,
    aggregate_stats,
    compute_delta,
    degree_scalers,
    pna_layer_forward,
)
from .model import ModelConfig, PnaModel
from .train import Adam, TrainConfig, TrainReport, mae, mape, train

__all__ = [
    "Adam",
    "GraphBatch",
    "ModelConfig",
    "PnaLayerConfig",
    "PnaModel",
    "TrainConfig",
    "TrainReport",
    "aggregate_stats",
    "compute_delta",
    "degree_scalers",
    "load_checkpoint",
    "mae",
    "mape",
    "pna_layer_forward",
    "save_checkpoint",
    "train",
]
