from __future__ import annotations

import time

import numpy as np
import pytest

from polymor.benchmarks import make_chafee, make_chafee_parametric
from polymor.models.parametric import AffineParametricSystem, assemble_at_parameter
from polymor.models.system import PolynomialSystem, rhs
from polymor.processing.interpolation import (
    InterpolationSet,
    build_bases,
    logspace_points,
    random_parameters,
    tangential_set,
)
from polymor.processing.loewner import (
    CoincidentPointsError,
    LoewnerPencil,
    OrderSelectionError,
    _effective_basis,
    assemble_rom,
    build_pencil,
    divided_difference_pencil,
    hadamard_rom,
    prepare_pencil,
    reduce,
    select_order,
)
from polymor.transfer.evaluation import eval_FH, eval_FL, eval_FN, evaluate
from tests.conftest import linear_siso_system, random_stable_system


def _pencil(values_row, values_col, size=4):
    blocks = (np.eye(size),)
    return LoewnerPencil(
        L_blocks=blocks,
        Ls_blocks=blocks,
        Y1=np.eye(size),
        singular_values_row=np.asarray(values_row, dtype=float),
        X2=np.eye(size),
        singular_values_col=np.asarray(values_col, dtype=float),
    )


def test_scalar_pencil_matches_divided_differences(scalar_system):
    iset = InterpolationSet(sigma=np.array([1.0]), mu=np.array([2.0]), mode="siso-general")
    raw = build_bases(scalar_system, iset)
    pencil = build_pencil(scalar_system, raw.V, raw.W)
    assert np.allclose(pencil.L, [[-1.0 / 6.0]])
    assert np.allclose(pencil.Ls, [[1.0 / 6.0]])

    L, Ls = divided_difference_pencil([0.5], [1.0], [1.0 / 3.0], [2.0])
    assert np.allclose(L, [[-1.0 / 6.0]])
    assert np.allclose(Ls, [[1.0 / 6.0]])


@pytest.mark.parametrize("seed", range(20))
def test_projection_pencil_equals_divided_differences(seed):
    system = linear_siso_system(n=30, seed=seed)
    sigma = np.array([0.1, 0.5, 2.0, 8.0])
    mu = np.array([0.2, 1.0, 4.0, 16.0])
    raw = build_bases(system, InterpolationSet(sigma=sigma, mu=mu, mode="siso-general"))
    pencil = build_pencil(system, raw.V, raw.W)
    right = [eval_FL(system, s)[0, 0] for s in sigma]
    left = [eval_FL(system, s)[0, 0] for s in mu]
    L, Ls = divided_difference_pencil(right, sigma, left, mu)
    assert np.allclose(pencil.L, L, rtol=1e-10, atol=1e-12)
    assert np.allclose(pencil.Ls, Ls, rtol=1e-10, atol=1e-12)


def test_divided_differences_reject_coincident_points():
    with pytest.raises(CoincidentPointsError):
        divided_difference_pencil([1.0, 2.0], [1.0, 2.0], [3.0], [2.0])


def test_select_order_by_threshold_and_explicit():
    pencil = _pencil([1.0, 1e-3, 1e-9, 1e-20], [1.0, 1e-2, 1e-5, 1e-20])
    _, _, r = select_order(pencil, threshold=1e-8)
    assert r == 3
    _, _, r = select_order(pencil, threshold=1e-4)
    assert r == 2
    _, _, r = select_order(pencil, threshold=1e-1)
    assert r == 1
    Y, X, r = select_order(pencil, order=2)
    assert r == 2 and Y.shape == (4, 2) and X.shape == (4, 2)


def test_select_order_rejects_order_above_rank():
    pencil = _pencil([1.0, 1e-3, 1e-20, 0.0], [1.0, 1e-3, 1e-20, 0.0])
    with pytest.raises(OrderSelectionError):
        select_order(pencil, order=3)
    with pytest.raises(OrderSelectionError):
        select_order(_pencil([0.0] * 4, [0.0] * 4))
    with pytest.raises(OrderSelectionError):
        select_order(pencil, threshold=2.0)


def _central_slope(evaluate_at, points, slot):
    h = 1e-5 * abs(points[slot])
    plus, minus = list(points), list(points)
    plus[slot] += h
    minus[slot] -= h
    return (evaluate_at(plus) - evaluate_at(minus)) / (2 * h)


def test_untruncated_rom_interpolates_all_transfer_functions():
    start = time.perf_counter()
    system = random_stable_system(n=50, seed=21)
    sigma = logspace_points(1e-2, 1e2, 4)
    result = reduce(system, tangential_set(system, sigma), threshold=1e-14)
    rom = result.rom
    assert result.order <= 16
    for s in sigma:
        checks = [
            (eval_FL(system, s), eval_FL(rom, s)),
            (eval_FH(system, 2, [s] * 3), eval_FH(rom, 2, [s] * 3)),
            (eval_FH(system, 3, [s] * 4), eval_FH(rom, 3, [s] * 4)),
            (eval_FN(system, 1, [s] * 2), eval_FN(rom, 1, [s] * 2)),
        ]
        for full, reduced in checks:
            assert np.linalg.norm(full - reduced) <= 1e-6 * np.linalg.norm(full)
        # right and left points coincide, so first derivatives are matched too
        h = 1e-5 * s
        full_slope = (eval_FL(system, s + h) - eval_FL(system, s - h)) / (2 * h)
        rom_slope = (eval_FL(rom, s + h) - eval_FL(rom, s - h)) / (2 * h)
        assert np.linalg.norm(full_slope - rom_slope) <= 1e-4 * np.linalg.norm(full_slope)
        # s_1 feeds the rightmost Kronecker slot; the last point is the outer resolvent
        for kind, degree in (("H", 2), ("H", 3), ("N", 1)):
            points = [s] * (degree + 1)
            for slot in (0, degree):
                full_slope = _central_slope(lambda p: evaluate(system, kind, degree, p), points, slot)
                rom_slope = _central_slope(lambda p: evaluate(rom, kind, degree, p), points, slot)
                assert np.linalg.norm(full_slope - rom_slope) <= 1e-4 * np.linalg.norm(full_slope), (kind, degree, slot)
    assert time.perf_counter() - start < 30.0


def test_two_sided_rom_interpolates_mixed_tuples():
    start = time.perf_counter()
    system = random_stable_system(n=50, seed=21)
    sigma = np.array([0.01, 0.1, 1.0, 10.0])
    mu = np.array([0.02, 0.3, 3.0, 30.0])
    rom = reduce(system, InterpolationSet(sigma=sigma, mu=mu, mode="siso-general"), threshold=1e-14).rom
    for s, m in zip(sigma, mu):
        checks = [
            (eval_FL(system, s), eval_FL(rom, s)),
            (eval_FL(system, m), eval_FL(rom, m)),
            (eval_FH(system, 2, [s, s, m]), eval_FH(rom, 2, [s, s, m])),
            (eval_FH(system, 3, [s, s, s, m]), eval_FH(rom, 3, [s, s, s, m])),
            (eval_FN(system, 1, [s, m]), eval_FN(rom, 1, [s, m])),
        ]
        for full, reduced in checks:
            assert np.linalg.norm(full - reduced) <= 1e-6 * np.linalg.norm(full)
    assert time.perf_counter() - start < 30.0


def test_reduce_effective_bases_are_orthonormal():
    system = make_chafee(40)
    result = reduce(system, tangential_set(system, logspace_points(1e-3, 1e3, 20)), order=6)
    assert result.order == 6
    assert result.rom.n == 6
    for Q in (result.V_eff, result.W_eff):
        assert np.linalg.norm(Q.T @ Q - np.eye(6)) <= 1e-12
    assert set(result.timings) == {"bases", "pencil", "selection", "assembly"}
    assert "E_condition" in result.diagnostics
    assert result.rom.metadata["reduced_order"] == "6"
    assert result.rom.metadata["benchmark"] == "chafee"


def test_one_sided_reduction_uses_one_basis():
    system = make_chafee(30)
    result = reduce(system, tangential_set(system, logspace_points(1e-2, 1e2, 10)), order=4, one_sided=True)
    assert result.W_eff is result.V_eff
    assert np.allclose(result.rom.E, np.eye(4))


def test_prepare_pencil_normalizes_columns():
    system = make_chafee(25)
    raw = build_bases(system, tangential_set(system, logspace_points(1e-1, 1e1, 5)))
    V, W, pencil = prepare_pencil(system, raw)
    assert np.allclose(np.linalg.norm(V, axis=0), 1.0)
    assert np.allclose(np.linalg.norm(W, axis=0), 1.0)
    assert pencil.shape == (W.shape[1], V.shape[1])


def test_assemble_rom_reorthonormalizes_with_warning(small_chafee):
    rng = np.random.default_rng(0)
    V = rng.standard_normal((20, 3))
    with pytest.warns(RuntimeWarning):
        rom, _ = assemble_rom(small_chafee, V, V)
    assert rom.n == 3


def test_hadamard_rom_agrees_with_dense_rom():
    system = make_chafee(30)
    result = reduce(system, tangential_set(system, logspace_points(1e-2, 1e2, 10)), order=5)
    hadamard = hadamard_rom(result)
    assert hadamard.metadata["nonlinear_storage"] == "hadamard"
    x = np.random.default_rng(1).standard_normal(5)
    assert np.allclose(rhs(hadamard, x, [2.0]), rhs(result.rom, x, [2.0]))


def test_parametric_reduction_builds_affine_rom():
    family = make_chafee_parametric(30)
    sigma = logspace_points(1e-2, 1e2, 12)
    p = random_parameters(family.parameter_box, 12, seed=0)
    iset = InterpolationSet(sigma=sigma, p=p, mode="parametric-tangential")
    result = reduce(family, iset, order=5)
    rom = result.rom
    assert isinstance(rom, AffineParametricSystem)
    assert len(rom.A) == 2 and len(result.pencil.Ls_blocks) == 2
    frozen = assemble_at_parameter(rom, [1.0])
    assert isinstance(frozen, PolynomialSystem)
    assert frozen.n == 5
    expected = result.W_eff.T @ (assemble_at_parameter(family, [1.0]).A @ result.V_eff)
    assert np.allclose(frozen.A, expected)


def test_effective_basis_rejects_rank_deficient_products():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((20, 3))
    Q = _effective_basis(M, 3, "V_eff")
    assert np.allclose(Q.T @ Q, np.eye(3))
    assert np.allclose(Q @ (Q.T @ M), M)
    M[:, 2] = M[:, 0] - 2.0 * M[:, 1]
    with pytest.raises(OrderSelectionError):
        _effective_basis(M, 3, "V_eff")
