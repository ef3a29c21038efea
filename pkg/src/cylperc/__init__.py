"""Vacant set of Poisson unit cylinders in R^3, restricted to a rough hexagonal surface."""
__version__ = "0.1.0"
