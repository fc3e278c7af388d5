"""Numerical laboratory for the parabolic thin-obstacle (Signorini) problem."""

__version__ = "0.1.0"
