"""Polynomial system definitions, parametric families and lifting."""
