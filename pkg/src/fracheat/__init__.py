"""Numerical laboratory for the fractional stochastic heat equation on the circle."""
__version__ = "0.1.0"
