"""Probe how recurrent recognizers of regular languages map onto minimal DFAs."""

__version__ = "0.1.0"
