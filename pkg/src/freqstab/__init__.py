"""Frequency-domain noise-stability analysis for small ConvNets trained from scratch."""

__version__ = "0.1.0"
