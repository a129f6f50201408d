"""Interpolation bases and Loewner reduction."""
