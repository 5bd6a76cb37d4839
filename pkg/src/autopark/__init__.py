"""Surround-camera parking: BEV perception, token-sequence planning, closed-loop control."""

__version__ = "0.1.0"
