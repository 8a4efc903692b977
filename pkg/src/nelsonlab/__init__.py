"""Lattice laboratory for the variable-coefficient Nelson model."""

__version__ = "0.1.0"
