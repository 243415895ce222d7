"""Compact differentiable-network engine: float64, deterministic, numpy-only."""

from .layers import (
    Conv2d,
    Dense,
    Flatten,
    GlobalAvgPool,
    Network,
    ResidualBlock,
    conv_resnet,
    mlp,
)
from .losses import bbox_loss, bce_mean, bilateration_loss, categorical_ce, triplet_loss
from .optim import Adam, EarlyStopping, OptimizerConfig, PlateauDecay, RMSprop, StepDecay
from .train import TrainHistory, numerical_gradients, supervised_epoch_factory, train

__all__ = [
    "Adam",
    "Conv2d",
    "Dense",
    "EarlyStopping",
    "Flatten",
    "GlobalAvgPool",
    "Network",
    "OptimizerConfig",
    "PlateauDecay",
    "RMSprop",
    "ResidualBlock",
    "StepDecay",
    "TrainHistory",
    "bbox_loss",
    "bce_mean",
    "bilateration_loss",
    "categorical_ce",
    "conv_resnet",
    "mlp",
    "numerical_gradients",
    "supervised_epoch_factory",
    "train",
    "triplet_loss",
]
