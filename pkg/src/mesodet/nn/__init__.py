from .layers import (
    BatchNorm2D,
    Conv2D,
    Dense,
    Dropout,
    GlobalAvgPool,
    MaxPool2D,
    ReLU,
    SepConv2D,
)
from .losses import cross_entropy_logit_grad, softmax, weighted_cross_entropy
from .model import NEGATIVE, POSITIVE, RESOLUTION_PRESETS, ModelConfig, Network, ResidualBlock
from .optim import Adam, adam_update
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Adam",
    "BatchNorm2D",
    "Conv2D",
    "Dense",
    "Dropout",
    "GlobalAvgPool",
    "MaxPool2D",
    "ModelConfig",
    "NEGATIVE",
    "Network",
    "POSITIVE",
    "RESOLUTION_PRESETS",
    "ReLU",
    "ResidualBlock",
    "SepConv2D",
    "adam_update",
    "cross_entropy_logit_grad",
    "load_checkpoint",
    "save_checkpoint",
    "softmax",
    "weighted_cross_entropy",
]
