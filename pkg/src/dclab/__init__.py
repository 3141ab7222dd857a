"""Numerical lab for Dirichlet forms on one-dimensional meshes."""

__version__ = "0.1.0"
