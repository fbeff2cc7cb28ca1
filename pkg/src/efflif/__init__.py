"""LIF spiking networks with shared membrane buffers across layers and channels."""

from .errors import (ConfigError, DataError, DimensionError, DivergenceError, DivisibilityError,
                     EfflifError, NumericError, StateError, UnsupportedModeError)
from .lif import LifParams, Reset
from .network import LayerSpec, BlockSpec, NetworkSpec, init_weights
from .sharing import BASELINE, Kind, SharingScheme

__version__ = "0.1.0"

__all__ = [
    "BASELINE", "BlockSpec", "ConfigError", "DataError", "DimensionError", "DivergenceError",
    "DivisibilityError", "EfflifError", "Kind", "LayerSpec", "LifParams", "NetworkSpec",
    "NumericError", "Reset", "SharingScheme", "StateError", "UnsupportedModeError",
    "init_weights",
]
