"""Minimal numpy neural-network layer: layers, Adam, BCE training, serialisation."""

from .layers import (LAYER_KINDS, LayerSpec, ShapeError, conv2d, dense, dropout, flatten,
                     maxpool)
from .network import Sequential
from .optim import Adam, AdamConfig, adam_step, init_state
from .training import bce_with_logits, fit_network

__all__ = [
    "LAYER_KINDS", "LayerSpec", "ShapeError", "conv2d", "dense", "dropout", "flatten", "maxpool",
    "Sequential", "Adam", "AdamConfig", "adam_step", "init_state", "bce_with_logits", "fit_network",
]
