"""
numisnet - weakly supervised detection of coin reverse motifs

Learns what semantic elements (horse, cornucopia, patera, eagle, shield) look
like on ancient-coin reverses from image and auction-description pairs, using
a from-scratch convolutional network, and localizes them with occlusion
saliency maps.
"""

from .core import Network, NetworkTopology, load_checkpoint, presets, save_checkpoint
from .errors import ConfigError, DataError, NumericError, NumisError

__version__ = "1.0.0"
__all__ = [
    "Network",
    "NetworkTopology",
    "presets",
    "save_checkpoint",
    "load_checkpoint",
    "NumisError",
    "ConfigError",
    "DataError",
    "NumericError",
]
