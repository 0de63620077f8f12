"""Numerical toolkit for quadratic-differential geodesics and special Lagrangian model geometry."""

__version__ = "0.1.0"
