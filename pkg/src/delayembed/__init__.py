"""Certify and repair delay-coordinate embeddings of periodic signals and orbits."""

__version__ = "0.1.0"
