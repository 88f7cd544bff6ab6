"""Numerical laboratory for the random pinning model in a correlated Gaussian environment."""

__version__ = "0.1.0"
