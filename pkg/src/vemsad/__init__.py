"""Polyhedral virtual element solver for stress-assisted diffusion."""

__version__ = "0.1.0"
