"""Adapter between ML encoders and the rank-brittle file formats."""

__version__ = "0.1.0"
