"""Bergman kernels of L^p on model Kähler curves: decay, expansion, gaps, coverings."""

__version__ = "0.1.0"
