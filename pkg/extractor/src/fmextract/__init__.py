"""Offline extraction of per-scan video frames and CNN feature-map tensors."""

__version__ = "0.1.0"
