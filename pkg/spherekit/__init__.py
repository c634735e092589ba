"""Spherical-geometry kernels for 360-degree depth estimation."""

__version__ = "0.1.0"
