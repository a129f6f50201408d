from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from polymor.benchmarks import make_chafee, make_fhn
from polymor.models.system import BilinearOperator, HadamardTerm, NonlinearOperator, PolynomialSystem


def random_stable_system(
    n: int = 12,
    m: int = 1,
    q: int = 1,
    seed: int = 0,
    quadratic: bool = True,
    cubic: bool = True,
    bilinear: bool = True,
    density: float = 0.3,
) -> PolynomialSystem:
    """Sparse system with a diagonally dominant negative A and small nonlinear terms."""

    rng = np.random.default_rng(seed)
    off = sp.random(n, n, density=density, random_state=rng, format="csr")
    off = off - sp.diags(off.diagonal())
    dominance = np.asarray(abs(off).sum(axis=1)).ravel() + 1.0
    A = (off - sp.diags(dominance + rng.uniform(0.5, 1.5, n))).tocsr()
    B = sp.csr_matrix(rng.standard_normal((n, m)))
    C = sp.csr_matrix(rng.standard_normal((q, n)))

    def factor() -> sp.csr_matrix:
        return (0.3 * sp.random(n, n, density=density, random_state=rng, format="csr") + 0.2 * sp.identity(n)).tocsr()

    H = {}
    if quadratic:
        H[2] = NonlinearOperator(degree=2, n=n, terms=(HadamardTerm(0.5, (factor(), factor())),))
    if cubic:
        H[3] = NonlinearOperator(degree=3, n=n, terms=(HadamardTerm(-0.2, (factor(), factor(), factor())),))
    N = {}
    if bilinear:
        N[1] = BilinearOperator(degree=1, n=n, m=m, matrix=0.1 * sp.random(n, m * n, density=density, random_state=rng, format="csr"))
    return PolynomialSystem(E=sp.identity(n, format="csr"), A=A, B=B, C=C, H=H, N=N)


def scalar_linear_system() -> PolynomialSystem:
    """``x' = -x + u``, ``y = x``."""

    return PolynomialSystem(
        E=np.eye(1),
        A=-np.eye(1),
        B=np.ones((1, 1)),
        C=np.ones((1, 1)),
    )


def linear_siso_system(n: int, seed: int) -> PolynomialSystem:
    return random_stable_system(n=n, seed=seed, quadratic=False, cubic=False, bilinear=False)


@pytest.fixture
def random_system() -> PolynomialSystem:
    return random_stable_system()


@pytest.fixture
def scalar_system() -> PolynomialSystem:
    return scalar_linear_system()


@pytest.fixture
def small_chafee() -> PolynomialSystem:
    return make_chafee(20)


@pytest.fixture
def small_fhn() -> PolynomialSystem:
    return make_fhn(10)
