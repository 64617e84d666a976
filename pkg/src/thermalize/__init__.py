"""Numerical laboratory for thermalization of harmonic solids and their radiation."""

__version__ = "0.1.0"
