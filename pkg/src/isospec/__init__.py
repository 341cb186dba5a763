"""Isospectral non-isometric hyperbolic surfaces from almost conjugate subgroups."""

__version__ = "0.1.0"
