"""Finite-horizon optimal sequential change detection."""

__version__ = "0.1.0"
