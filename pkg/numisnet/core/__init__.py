"""
Core numeric engine: topologies, layer ops, optimizer, checkpoints
"""

from .topology import LayerSpec, NetworkTopology, presets, paper_topology, mini_topology
from .layers import (
    conv2d_forward,
    conv2d_backward,
    maxpool_forward,
    maxpool_backward,
    dense_forward,
    dense_backward,
    relu,
    relu_backward,
    dropout,
    softmax,
    softmax_cross_entropy,
)
from .optim import AdamState, adam_step
from .network import Network, init_weights, forward_full, backward_full
from .checkpoint import Checkpoint, save_checkpoint, load_checkpoint

__all__ = [
    "LayerSpec",
    "NetworkTopology",
    "presets",
    "paper_topology",
    "mini_topology",
    "conv2d_forward",
    "conv2d_backward",
    "maxpool_forward",
    "maxpool_backward",
    "dense_forward",
    "dense_backward",
    "relu",
    "relu_backward",
    "dropout",
    "softmax",
    "softmax_cross_entropy",
    "AdamState",
    "adam_step",
    "Network",
    "init_weights",
    "forward_full",
    "backward_full",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]
