"""Small hand-built polynomial systems used as regression fixtures."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from polymor.models.system import BilinearOperator, HadamardTerm, NonlinearOperator, PolynomialSystem


def _selector(row: int, col: int, n: int = 2) -> sp.csr_matrix:
    return sp.csr_matrix(([1.0], ([row], [col])), shape=(n, n))


def make_exp_fixture() -> PolynomialSystem:
    """Polynomial form of ``x' = -x - x^3 exp(-x) + u`` with ``z = exp(-x)``.

    States ``(x, z)``:

        x' = -x - x^3 z + u
        z' = x z + x^3 z^2 - z u

    On the manifold ``z = exp(-x)`` both systems agree.
    """

    xx, xz = _selector(0, 0), _selector(0, 1)
    zx, zz = _selector(1, 0), _selector(1, 1)
    H = {
        2: NonlinearOperator(degree=2, n=2, terms=(HadamardTerm(1.0, (zx, zz)),)),
        4: NonlinearOperator(degree=4, n=2, terms=(HadamardTerm(-1.0, (xx, xx, xx, xz)),)),
        5: NonlinearOperator(degree=5, n=2, terms=(HadamardTerm(1.0, (zx, zx, zx, zz, zz)),)),
    }
    N = {1: BilinearOperator(degree=1, n=2, m=1, matrix=sp.csr_matrix(([-1.0], ([1], [1])), shape=(2, 2)))}
    return PolynomialSystem(
        E=sp.identity(2, format="csr"),
        A=sp.csr_matrix(np.diag([-1.0, 0.0])),
        B=sp.csr_matrix(([1.0], ([0], [0])), shape=(2, 1)),
        C=sp.csr_matrix(([1.0], ([0], [0])), shape=(1, 2)),
        H=H,
        N=N,
        metadata={"benchmark": "exp-fixture", "output": "x"},
    )


def smooth_exp_rhs(x: float, u: float) -> float:
    """Right side of the original non-polynomial scalar system."""

    return -x - x**3 * np.exp(-x) + u
