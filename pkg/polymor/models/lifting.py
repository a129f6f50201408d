"""Quadratic-bilinear lifting of elementwise cubic systems.

Every state ``x_k`` that carries a cubic term gets an auxiliary state
``w_k = x_k**2`` with ``w_k' = 2 x_k x_k'``. Cubic terms become ``g * x * w``,
and the auxiliary equations are quadratic in ``(x, w)`` plus a bilinear input
term.
"""

from __future__ import annotations

import logging
from typing import Dict, List

import numpy as np
import scipy.sparse as sp

from polymor.models.system import (
    BilinearOperator,
    HadamardTerm,
    NonlinearOperator,
    PolynomialSystem,
)

LOGGER = logging.getLogger(__name__)


class UnsupportedLiftError(ValueError):
    """Raised when a system is outside the elementwise cubic class."""


def _diagonal(matrix, label: str) -> np.ndarray:
    csr = sp.csr_matrix(matrix)
    diag = csr.diagonal()
    if abs(csr - sp.diags(diag)).sum() != 0:
        raise UnsupportedLiftError(f"{label} is not diagonal")
    return diag


def _elementwise_weights(sys: PolynomialSystem, degree: int) -> np.ndarray:
    weights = np.zeros(sys.n)
    op = sys.H.get(degree)
    if op is None:
        return weights
    if not op.terms:
        raise UnsupportedLiftError(f"H_{degree} must be given in Hadamard form")
    for index, term in enumerate(op.terms):
        if term.output is not None:
            raise UnsupportedLiftError("projected terms cannot be lifted")
        product = np.full(sys.n, term.coefficient)
        for j, factor in enumerate(term.factors):
            product = product * _diagonal(factor, f"factor {j + 1} of H_{degree} term {index + 1}")
        weights += product
    return weights


def lift_cubic_to_qb(sys: PolynomialSystem) -> PolynomialSystem:
    """Rewrite an elementwise cubic system as an equivalent quadratic-bilinear one."""

    if not sys.is_sparse:
        raise UnsupportedLiftError("only sparse full-order systems can be lifted")
    unsupported = sorted(set(sys.H) - {2, 3})
    if unsupported:
        raise UnsupportedLiftError(f"nonlinear degrees {unsupported} are not elementwise cubic")
    if any(degree != 1 for degree in sys.N):
        raise UnsupportedLiftError("only N_1 bilinear terms can be carried through the lift")
    e = _diagonal(sys.E, "E")
    cubic = _elementwise_weights(sys, 3)
    quadratic = _elementwise_weights(sys, 2)
    support = np.flatnonzero(cubic)
    if support.size == 0:
        raise UnsupportedLiftError("system has no cubic term to lift")

    n, m, s = sys.n, sys.m, support.size
    size = n + s
    aux = n + np.arange(s)
    if 1 in sys.N:
        touched = np.abs(sys.N[1].matrix).sum(axis=1).A1[support]
        if np.any(touched):
            raise UnsupportedLiftError("bilinear terms on cubic states would leave the QB class")

    def pad(matrix) -> sp.csr_matrix:
        return sp.block_diag([sp.csr_matrix(matrix), sp.csr_matrix((s, s))], format="csr")

    def placed(rows, cols, values) -> sp.csr_matrix:
        return sp.csr_matrix((values, (rows, cols)), shape=(size, size))

    terms: List[HadamardTerm] = []
    if 2 in sys.H:
        terms.extend(
            HadamardTerm(t.coefficient, tuple(pad(f) for f in t.factors)) for t in sys.H[2].terms
        )
    # x equations: g * x * w
    terms.append(HadamardTerm(1.0, (placed(support, support, cubic[support]), placed(support, aux, np.ones(s)))))
    # w equations: (2 / e) x (A x)
    A = sp.csr_matrix(sys.A)[support]
    a_rows = sp.csr_matrix((A.data, A.indices, A.indptr), shape=(s, size))
    terms.append(
        HadamardTerm(
            1.0,
            (
                placed(aux, support, 2.0 / e[support]),
                sp.vstack([sp.csr_matrix((n, size)), a_rows], format="csr"),
            ),
        )
    )
    # w equations: (2 h / e) x w and (2 g / e) w w
    h_weights = 2.0 * quadratic[support] / e[support]
    if np.any(h_weights):
        terms.append(HadamardTerm(1.0, (placed(aux, support, h_weights), placed(aux, aux, np.ones(s)))))
    terms.append(
        HadamardTerm(1.0, (placed(aux, aux, 2.0 * cubic[support] / e[support]), placed(aux, aux, np.ones(s))))
    )

    # w equations: (2 / e) x (B u)
    B = sp.csr_matrix(sys.B)
    blocks = []
    for j in range(m):
        weights = 2.0 * B[support, j].toarray().ravel() / e[support]
        block = placed(aux, support, weights)
        if 1 in sys.N:
            block = block + pad(sys.N[1].input_slice(j))
        blocks.append(block)
    N: Dict[int, BilinearOperator] = {}
    bilinear = sp.hstack(blocks, format="csr")
    if bilinear.nnz:
        N[1] = BilinearOperator(degree=1, n=size, m=m, matrix=bilinear)

    metadata = dict(sys.metadata)
    metadata.update({"lifted": "qb", "lifted_from_order": str(n), "auxiliary_states": str(s)})
    lifted = PolynomialSystem(
        E=sp.block_diag([sp.csr_matrix(sys.E), sp.identity(s)], format="csr"),
        A=pad(sys.A),
        B=sp.vstack([B, sp.csr_matrix((s, m))], format="csr"),
        C=sp.hstack([sp.csr_matrix(sys.C), sp.csr_matrix((sys.q, s))], format="csr"),
        H={2: NonlinearOperator(degree=2, n=size, terms=tuple(terms))},
        N=N,
        metadata=metadata,
    )
    LOGGER.info("Lifted cubic system of order %d to QB order %d", n, size)
    return lifted
