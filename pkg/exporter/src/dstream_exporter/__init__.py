"""Bridge from real detector ecosystems to `.dstream` monitoring streams."""

__version__ = "0.1.0"
