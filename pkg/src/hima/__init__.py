"""Hierarchical imitation multi-agent stack over a text RTS macro simulator."""

__version__ = "0.1.0"
