"""Learned multi-path rate scheduling over mmWave 1-2-1 networks."""

__version__ = "0.1.0"
