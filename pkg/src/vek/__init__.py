"""Numerical fact-checking toolkit."""

__version__ = "0.1.0"
