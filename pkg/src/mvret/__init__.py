"""Controllable cross-modal music/video retrieval over precomputed features."""

__version__ = "0.1.0"
