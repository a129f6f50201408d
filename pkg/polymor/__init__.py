"""Loewner-framework model reduction for polynomial dynamical systems."""

__version__ = "0.1.0"
