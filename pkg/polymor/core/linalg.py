"""Shared LU factorizations for sparse and dense square matrices."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Any, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

Matrix = Union[np.ndarray, sp.spmatrix]


class FactorizationError(RuntimeError):
    """Raised when a matrix cannot be LU-factorized."""


@dataclass
class Factorization:
    """LU factors of a square matrix with a uniform ``solve`` interface."""

    lu: Any
    sparse: bool
    shape: tuple
    dtype: np.dtype = np.dtype(float)

    def solve(self, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        """Solve ``M X = rhs`` (or ``M^T X = rhs``); no complex conjugation."""

        rhs = np.asarray(rhs)
        if self.sparse:
            trans = "T" if transpose else "N"
            if np.iscomplexobj(rhs) and not np.issubdtype(self.dtype, np.complexfloating):
                real = self.lu.solve(np.ascontiguousarray(rhs.real), trans=trans)
                imag = self.lu.solve(np.ascontiguousarray(rhs.imag), trans=trans)
                return real + 1j * imag
            dtype = np.result_type(self.dtype, rhs.dtype)
            return self.lu.solve(np.ascontiguousarray(rhs, dtype=dtype), trans=trans)
        return sla.lu_solve(self.lu, rhs, trans=1 if transpose else 0, check_finite=False)


def factorize(matrix: Matrix) -> Factorization:
    """LU-factorize ``matrix`` (SuperLU for sparse input, LAPACK for dense)."""

    if matrix.shape[0] != matrix.shape[1]:
        raise FactorizationError(f"cannot factorize non-square matrix of shape {matrix.shape}")
    if sp.issparse(matrix):
        try:
            lu = spla.splu(sp.csc_matrix(matrix))
        except RuntimeError as exc:
            raise FactorizationError(f"sparse LU failed: {exc}") from exc
        return Factorization(lu=lu, sparse=True, shape=matrix.shape, dtype=np.dtype(matrix.dtype))

    dense = np.asarray(matrix)
    if not np.all(np.isfinite(dense)):
        raise FactorizationError("matrix contains non-finite entries")
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            lu = sla.lu_factor(dense, check_finite=False)
        except (sla.LinAlgWarning, np.linalg.LinAlgError) as exc:
            raise FactorizationError(f"dense LU failed: {exc}") from exc
    if np.any(np.diag(lu[0]) == 0):
        raise FactorizationError("matrix is exactly singular")
    return Factorization(lu=lu, sparse=False, shape=dense.shape, dtype=dense.dtype)
