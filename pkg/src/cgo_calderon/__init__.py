"""Reconstruction of a 3-D conductivity from its Dirichlet-to-Neumann map
with complex geometrical optics solutions."""

__version__ = "0.1.0"
