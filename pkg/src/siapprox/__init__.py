"""Approximation of growing signals in shift-invariant B-spline spaces."""

__version__ = "0.1.0"
