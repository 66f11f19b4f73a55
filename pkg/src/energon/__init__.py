"""Transformer architecture extraction from GPU power and thermal telemetry."""

__version__ = "0.1.0"
