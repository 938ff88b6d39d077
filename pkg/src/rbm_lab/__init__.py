"""Numerical laboratory for 2D Gaussian random band matrices and their dual representation."""

__version__ = "0.1.0"
