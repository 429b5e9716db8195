"""Blind prediction of per-pixel similarity quality maps and map-based quality scores."""

__version__ = "0.1.0"
