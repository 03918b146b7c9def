"""Numerical laboratory for (m,h) sets, barriers, discrete varifolds and forced level-set flows."""

__version__ = "0.1.0"
