"""Gaussian-disk splatting with cyclic reconstruction/restoration fusion."""

__version__ = "0.1.0"
