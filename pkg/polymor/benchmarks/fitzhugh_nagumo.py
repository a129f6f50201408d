"""Finite-difference FitzHugh-Nagumo system.

    eps v_t = eps^2 v_xx + v (v - 0.1)(1 - v) - w + q
        w_t = h v - gamma w + q

on ``k`` nodes of ``[0, L]`` with ``v_x(0) = -i0(t)`` and ``v_x(L) = 0``. The
state is ``[v; w]``. Input 1 is ``i0`` entering the left node, input 2 is the
constant source (held at 1). Outputs are ``v`` and ``w`` at the left node.
"""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np
import scipy.sparse as sp

from polymor.config import DEFAULT_CONFIG
from polymor.models.system import HadamardTerm, NonlinearOperator, PolynomialSystem, SystemDefinitionError

LOGGER = logging.getLogger(__name__)


def neumann_laplacian(k: int, dx: float) -> sp.csr_matrix:
    """Second differences with mirrored ghost nodes at both ends."""

    upper = np.ones(k - 1)
    lower = np.ones(k - 1)
    upper[0] = 2.0
    lower[-1] = 2.0
    return sp.diags([lower, np.full(k, -2.0), upper], [-1, 0, 1], format="csr") / dx**2


def make_fhn(
    k: int,
    epsilon: Optional[float] = None,
    length: Optional[float] = None,
) -> PolynomialSystem:
    """MIMO cubic system of order ``2k`` with two inputs and two outputs."""

    if k < 3:
        raise SystemDefinitionError(f"grid must have at least 3 nodes, got {k}")
    cfg = DEFAULT_CONFIG.benchmarks
    eps = cfg.fhn_epsilon if epsilon is None else epsilon
    length = cfg.fhn_length if length is None else length
    if eps <= 0:
        raise SystemDefinitionError(f"epsilon must be positive, got {eps}")
    recovery, gamma, source = cfg.fhn_recovery, cfg.fhn_gamma, cfg.fhn_source
    dx = length / (k - 1)
    n = 2 * k
    eye = sp.identity(k, format="csr")

    A = sp.bmat(
        [
            [eps * neumann_laplacian(k, dx) - (0.1 / eps) * eye, -(1.0 / eps) * eye],
            [recovery * eye, -gamma * eye],
        ],
        format="csr",
    )
    B = np.zeros((n, 2))
    # ghost-node flux at x = 0, oriented so a positive current excites
    B[0, 0] = 2.0 * eps / dx
    B[:k, 1] = source / eps
    B[k:, 1] = source
    C = sp.csr_matrix(([1.0, 1.0], ([0, 1], [0, k])), shape=(2, n))

    v_rows = sp.diags(np.r_[np.ones(k), np.zeros(k)], format="csr")
    H = {
        2: NonlinearOperator(degree=2, n=n, terms=(HadamardTerm(1.1 / eps, (v_rows, v_rows)),)),
        3: NonlinearOperator(degree=3, n=n, terms=(HadamardTerm(-1.0 / eps, (v_rows, v_rows, v_rows)),)),
    }
    metadata = {
        "benchmark": "fhn",
        "grid": str(k),
        "epsilon": repr(eps),
        "length": repr(length),
        "output": "v and w at x = 0",
        "constant_inputs": "1",
        "end_time": repr(cfg.fhn_end_time),
        "default_input": "fhn-i0",
    }
    LOGGER.debug("FitzHugh-Nagumo system with k=%d, eps=%g", k, eps)
    return PolynomialSystem(
        E=sp.identity(n, format="csr"),
        A=A,
        B=sp.csr_matrix(B),
        C=C,
        H=H,
        metadata=metadata,
    )
