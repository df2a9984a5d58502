"""Vehicular edge federated learning: mobility, radio, learning and optimization."""

__version__ = "0.1.0"
