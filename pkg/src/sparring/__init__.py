"""Streaming two-character motion interaction engine."""

__version__ = "0.1.0"
