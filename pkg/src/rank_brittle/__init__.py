"""Benchmark ranking instability and brittleness of embedding retrieval under query perturbations."""

__version__ = "0.1.0"
