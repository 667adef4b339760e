"""Coarse-geometric Hall conductance numerics on finite 2D samples."""

__version__ = "0.1.0"
