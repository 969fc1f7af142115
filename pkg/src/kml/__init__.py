"""Minimal moment functions, Gaussian-kernel approximation bounds and their numerical checks."""

__version__ = "0.1.0"
