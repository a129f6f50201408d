from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from polymor.benchmarks import make_chafee_parametric
from polymor.models.parametric import assemble_at_parameter
from polymor.models.system import PolynomialSystem
from polymor.transfer.evaluation import (
    MissingTermError,
    ParametricEvaluator,
    ResolventSolver,
    SingularPencilError,
    eval_FH,
    eval_FL,
    eval_FN,
    eval_parametric,
    evaluate,
    map_points,
)
from tests.conftest import random_stable_system


def _resolvent(system, s):
    return np.linalg.inv(s * system.E.toarray() - system.A.toarray())


def test_scalar_linear_transfer(scalar_system):
    for s in (0.5, 1.0, 2.0 + 3.0j):
        assert np.isclose(eval_FL(scalar_system, s)[0, 0], 1.0 / (s + 1.0))


def test_resolvent_residual_on_random_system():
    system = random_stable_system(n=50, seed=11)
    solver = ResolventSolver(system)
    rng = np.random.default_rng(0)
    rhs = rng.standard_normal((50, 3))
    for s in (0.01, 0.3, 1.0 + 2.0j, 10.0, 100.0):
        X = solver.solve(s, rhs)
        residual = (s * system.E - system.A) @ X - rhs
        assert np.linalg.norm(residual) <= 1e-10 * np.linalg.norm(rhs)
        Xt = solver.solve(s, rhs, transpose=True)
        assert np.linalg.norm((s * system.E - system.A).T @ Xt - rhs) <= 1e-10 * np.linalg.norm(rhs)


def test_factorization_cache_is_reused_and_bounded():
    system = random_stable_system(n=10, seed=1)
    solver = ResolventSolver(system, cache_size=2)
    b = np.ones(10)
    solver.solve(1.0, b)
    solver.solve(1.0, b)
    assert (solver.hits, solver.misses) == (1, 1)
    solver.solve(2.0, b)
    solver.solve(3.0, b)
    solver.solve(1.0, b)
    assert solver.misses == 4


def test_singular_pencil_reports_point():
    system = PolynomialSystem(
        E=sp.identity(2, format="csr"),
        A=sp.identity(2, format="csr"),
        B=np.ones((2, 1)),
        C=np.ones((1, 2)),
    )
    with pytest.raises(SingularPencilError) as info:
        eval_FL(system, 1.0)
    assert info.value.s == 1.0


def test_quadratic_transfer_matches_dense_formula():
    system = random_stable_system(n=6, m=2, q=2, seed=3)
    s1, s2, s3 = 0.5, 1.5 + 1.0j, 2.0
    B, C = system.B.toarray(), system.C.toarray()
    H2 = system.H[2].explicit().toarray()
    expected = C @ _resolvent(system, s3) @ H2 @ np.kron(_resolvent(system, s2) @ B, _resolvent(system, s1) @ B)
    value = eval_FH(system, 2, [s1, s2, s3])
    assert value.shape == (2, 4)
    assert np.allclose(value, expected)


def test_cubic_transfer_matches_dense_formula():
    system = random_stable_system(n=5, seed=4)
    s = [0.2, 0.7, 1.1, 3.0]
    Phi = [_resolvent(system, v) @ system.B.toarray() for v in s[:3]]
    H3 = system.H[3].explicit().toarray()
    expected = system.C.toarray() @ _resolvent(system, s[3]) @ H3 @ np.kron(Phi[2], np.kron(Phi[1], Phi[0]))
    assert np.allclose(evaluate(system, "H", 3, s), expected)


def test_bilinear_transfer_matches_dense_formula():
    system = random_stable_system(n=6, m=2, q=1, seed=5)
    s1, s2 = 0.4, 2.5
    N1 = system.N[1].matrix.toarray()
    B = system.B.toarray()
    expected = system.C.toarray() @ _resolvent(system, s2) @ N1 @ np.kron(np.eye(2), _resolvent(system, s1) @ B)
    value = eval_FN(system, 1, [s1, s2])
    assert value.shape == (1, 4)
    assert np.allclose(value, expected)


def test_real_points_give_real_values():
    system = random_stable_system(n=8, seed=6)
    for value in (eval_FL(system, 0.3), eval_FH(system, 2, [0.3, 0.5, 2.0]), eval_FN(system, 1, [1.0, 4.0])):
        assert np.max(np.abs(np.imag(value))) <= 1e-13 * max(1.0, np.max(np.abs(value)))


def test_missing_term_and_arity_errors():
    system = random_stable_system(n=5, seed=7, cubic=False)
    with pytest.raises(MissingTermError):
        eval_FH(system, 3, [1.0, 1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        eval_FH(system, 2, [1.0, 1.0])
    with pytest.raises(ValueError):
        evaluate(system, "Q", 1, [1.0])


def test_parametric_evaluation_matches_frozen_system():
    family = make_chafee_parametric(12)
    evaluator = ParametricEvaluator(family)
    for p in (0.25, 1.3):
        frozen = assemble_at_parameter(family, [p])
        assert np.allclose(eval_parametric(family, "L", 1, [2.0], [p], evaluator), eval_FL(frozen, 2.0))
    assert evaluator.solver([0.25]) is evaluator.solver([0.25])


def test_map_points_threads_preserve_order():
    assert map_points(lambda v: v * v, range(6), workers=3) == [0, 1, 4, 9, 16, 25]
    assert map_points(lambda v: -v, [2], workers=4) == [-2]
