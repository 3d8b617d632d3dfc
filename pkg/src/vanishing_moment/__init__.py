"""Vanishing moment method for second-order fully nonlinear PDEs on structured grids."""

__version__ = "0.1.0"
