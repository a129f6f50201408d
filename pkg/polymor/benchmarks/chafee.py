"""Finite-difference Chafee-Infante systems.

``v_t = v_xx + v (p - v^2)`` on ``(0, L)`` with ``v(0, t) = u(t)`` and
``v_x(L, t) = 0``. Nodes ``x_i = i L / k`` for ``i = 1..k``; the Neumann end
uses a mirrored ghost node. The output is ``v`` at ``x = L``.
"""

from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from polymor.config import DEFAULT_CONFIG
from polymor.models.parametric import CONSTANT, AffineParametricSystem, CoefficientFunction
from polymor.models.system import HadamardTerm, NonlinearOperator, PolynomialSystem, SystemDefinitionError

LOGGER = logging.getLogger(__name__)


def _check_grid(k: int) -> None:
    if k < 3:
        raise SystemDefinitionError(f"grid must have at least 3 nodes, got {k}")


def chafee_diffusion(k: int, length: float) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Second-difference operator and the Dirichlet input column."""

    _check_grid(k)
    h = length / k
    main = np.full(k, -2.0)
    upper = np.ones(k - 1)
    lower = np.ones(k - 1)
    lower[-1] = 2.0  # ghost node mirrored at x = L
    D = sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / h**2
    B = sp.csr_matrix(([1.0 / h**2], ([0], [0])), shape=(k, 1))
    return D, B


def _cubic(k: int) -> NonlinearOperator:
    eye = sp.identity(k, format="csr")
    return NonlinearOperator(degree=3, n=k, terms=(HadamardTerm(-1.0, (eye, eye, eye)),))


def _output(k: int) -> sp.csr_matrix:
    return sp.csr_matrix(([1.0], ([0], [k - 1])), shape=(1, k))


def _metadata(k: int, length: float) -> dict:
    return {
        "benchmark": "chafee",
        "grid": str(k),
        "length": repr(length),
        "output": "v at x = L",
        "end_time": repr(DEFAULT_CONFIG.benchmarks.chafee_end_time),
        "default_input": "u1",
    }


def make_chafee(k: int, length: Optional[float] = None) -> PolynomialSystem:
    """Cubic SISO system of order ``k``."""

    length = DEFAULT_CONFIG.benchmarks.chafee_length if length is None else length
    D, B = chafee_diffusion(k, length)
    system = PolynomialSystem(
        E=sp.identity(k, format="csr"),
        A=(D + sp.identity(k)).tocsr(),
        B=B,
        C=_output(k),
        H={3: _cubic(k)},
        metadata=_metadata(k, length),
    )
    LOGGER.debug("Chafee-Infante system with k=%d, L=%g", k, length)
    return system


def make_chafee_parametric(
    k: int,
    length: Optional[float] = None,
    box: Optional[Tuple[float, float]] = None,
) -> AffineParametricSystem:
    """``A(p) = D + p I`` with every other matrix constant."""

    cfg = DEFAULT_CONFIG.benchmarks
    length = cfg.chafee_length if length is None else length
    box = cfg.chafee_param_box if box is None else box
    D, B = chafee_diffusion(k, length)
    eye = sp.identity(k, format="csr")
    metadata = _metadata(k, length)
    metadata["benchmark"] = "chafee-param"
    return AffineParametricSystem(
        E=((CONSTANT, eye),),
        A=((CONSTANT, D), (CoefficientFunction(kind="component", index=0), eye)),
        B=((CONSTANT, B),),
        C=((CONSTANT, _output(k)),),
        H={3: ((CONSTANT, _cubic(k)),)},
        parameter_box=(tuple(box),),
        metadata=metadata,
    )
