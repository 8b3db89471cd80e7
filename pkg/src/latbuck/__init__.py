"""Two-scale analysis and sizing optimization of graded triangular
lattices with buckling constraints on both scales."""

__version__ = "0.1.0"
