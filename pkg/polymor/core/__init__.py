"""Tensor primitives and factorization helpers."""
