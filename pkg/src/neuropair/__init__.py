"""Pair brain-network and CNN-filter neurons through the correlation of
their temporal activations under a shared stimulus timeline."""

__version__ = "0.1.0"

from .backend import selected_backend

__all__ = ["selected_backend", "__version__"]
