"""Exact formulas and desk-scale simulations for the one-dimensional KPZ class."""

__version__ = "0.1.0"
