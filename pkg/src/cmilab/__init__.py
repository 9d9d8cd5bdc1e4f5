"""Exact simulation of conditional correlations in quantum measurement distributions."""

__version__ = "0.1.0"
