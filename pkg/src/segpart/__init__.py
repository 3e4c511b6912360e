"""Equivariant segregated partitions on spheres and the associated entire solutions."""

__version__ = "0.1.0"
