from __future__ import annotations

import time

import numpy as np
import pytest

from polymor.benchmarks import make_chafee, make_fhn
from polymor.config import HyperConfig
from polymor.core.kron import kron_pow
from polymor.hyper.cur import (
    CurHyperModel,
    CurSelectionError,
    build_hyper,
    cur_decompose,
    hyper_from_bases,
    hyper_rhs,
    with_hyper,
)
from polymor.models.system import UnfoldingTooLargeError, rhs
from polymor.processing.interpolation import logspace_points, tangential_set
from polymor.processing.loewner import reduce


@pytest.fixture(scope="module")
def chafee_result():
    system = make_chafee(60)
    return reduce(system, tangential_set(system, logspace_points(1e-3, 1e3, 30)), order=3)


@pytest.mark.parametrize("method", ["greedy", "leverage"])
def test_exact_rank_matrix_is_reconstructed(method):
    rng = np.random.default_rng(0)
    M = rng.standard_normal((40, 3)) @ rng.standard_normal((3, 25))
    col_idx, row_idx, U = cur_decompose(M, 3, 3, method=method, seed=1)
    reconstruction = M[:, col_idx] @ U @ M[row_idx, :]
    assert np.linalg.norm(M - reconstruction) <= 1e-10 * np.linalg.norm(M)
    assert len(np.unique(col_idx)) == 3 and len(np.unique(row_idx)) == 3


def test_leverage_selection_is_seeded():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((30, 20))
    first = cur_decompose(M, 5, 6, method="leverage", seed=7)
    second = cur_decompose(M, 5, 6, method="leverage", seed=7)
    assert np.array_equal(first[0], second[0]) and np.array_equal(first[1], second[1])


def test_infeasible_sizes_and_methods():
    M = np.ones((5, 4))
    with pytest.raises(CurSelectionError):
        cur_decompose(M, 5, 2)
    with pytest.raises(CurSelectionError):
        cur_decompose(M, 2, 6)
    with pytest.raises(CurSelectionError):
        cur_decompose(M, 2, 2, method="random")


def test_hyper_rhs_tracks_exact_reduced_term(chafee_result):
    model = build_hyper(chafee_result, 3)
    # defaults: n_c = min(6 r, r^3), n_r = min(6 r, n)
    assert model.n_cols == 18 and model.n_rows == 18
    exact = chafee_result.rom.H[3]
    rng = np.random.default_rng(2)
    for _ in range(50):
        x = rng.standard_normal(3)
        expected = exact.apply(x)
        assert np.linalg.norm(hyper_rhs(model, x) - expected) <= 1e-8 * max(1.0, np.linalg.norm(x) ** 3)


def test_no_compression_reproduces_rom(chafee_result):
    r, n = chafee_result.order, chafee_result.source.n
    model = build_hyper(chafee_result, 3, n_c=r**3, n_r=n)
    x = np.random.default_rng(3).standard_normal(r)
    assert np.allclose(hyper_rhs(model, x), chafee_result.rom.H[3].apply(x), rtol=1e-10, atol=1e-10)
    hyper = with_hyper(chafee_result.rom, model)
    assert np.allclose(rhs(hyper, x, [1.0]), rhs(chafee_result.rom, x, [1.0]), rtol=1e-10, atol=1e-10)


def test_operator_matches_hyper_rhs(chafee_result):
    model = build_hyper(chafee_result, 3, n_c=10, n_r=12)
    x = np.random.default_rng(4).standard_normal(3)
    assert np.allclose(model.operator().apply(x), hyper_rhs(model, x))
    assert model.Psi.shape == (3, 12)


def test_hyper_rhs_sums_several_terms():
    rng = np.random.default_rng(8)
    factors = [tuple(rng.standard_normal((4, 3)) for _ in range(2)) for _ in range(3)]
    coefficients = (1.5, -2.0, 0.25)
    Psi = rng.standard_normal((3, 4))
    model = CurHyperModel(
        degree=2,
        row_idx=np.arange(4),
        col_idx=np.arange(4),
        Psi=Psi,
        sampled=tuple(zip(coefficients, factors)),
    )
    assert model.stacked.shape == (24, 3) and model.Psi_tiled.shape == (3, 12)
    x = rng.standard_normal(3)
    expected = Psi @ sum(c * (f[0] @ x) * (f[1] @ x) for c, f in zip(coefficients, factors))
    assert np.allclose(hyper_rhs(model, x), expected)
    assert np.allclose(model.operator().apply(x), expected)


def test_with_hyper_keeps_rom_metadata_untouched(chafee_result):
    model = build_hyper(chafee_result, 3)
    hyper = with_hyper(chafee_result.rom, model)
    assert hyper.metadata["hyper_reduced"] == "3"
    assert "hyper_reduced" not in chafee_result.rom.metadata


def test_with_hyper_rejects_mismatched_models(chafee_result):
    model = build_hyper(chafee_result, 3)
    fhn = make_fhn(10)
    fhn_result = reduce(fhn, tangential_set(fhn, logspace_points(1e-2, 1e2, 8)), order=4)
    with pytest.raises(CurSelectionError):
        with_hyper(fhn_result.rom, model)
    with pytest.raises(CurSelectionError):
        build_hyper(chafee_result, 2)


def test_quadratic_and_cubic_terms_on_mimo(small_fhn):
    result = reduce(small_fhn, tangential_set(small_fhn, logspace_points(1e-2, 1e2, 6)), order=4)
    models = [build_hyper(result, degree) for degree in (2, 3)]
    hyper = with_hyper(result.rom, *models)
    assert hyper.metadata["hyper_reduced"] == "2,3"
    x = 0.1 * np.random.default_rng(5).standard_normal(4)
    assert np.allclose(rhs(hyper, x, [1.0, 1.0]), rhs(result.rom, x, [1.0, 1.0]), rtol=1e-6, atol=1e-8)


def test_column_cap_is_enforced(chafee_result):
    with pytest.raises(UnfoldingTooLargeError):
        hyper_from_bases(
            chafee_result.source, chafee_result.V_eff, chafee_result.W_eff, 3, config=HyperConfig(max_columns=10)
        )


def test_model_validation():
    with pytest.raises(CurSelectionError):
        CurHyperModel(degree=2, row_idx=np.array([0, 0]), col_idx=np.array([0]), Psi=np.ones((2, 2)), sampled=())
    with pytest.raises(CurSelectionError):
        CurHyperModel(degree=2, row_idx=np.array([0, 1]), col_idx=np.array([0]), Psi=np.ones((2, 3)), sampled=())


@pytest.mark.slow
def test_hyper_rhs_is_faster_than_dense_term():
    system = make_chafee(100)
    result = reduce(system, tangential_set(system, logspace_points(1e-3, 1e3, 200)), order=10)
    model = build_hyper(result, 3, n_c=60, n_r=60)
    unfolding = result.rom.H[3].unfolding
    x = np.random.default_rng(6).standard_normal(10)

    start = time.perf_counter()
    for _ in range(10_000):
        unfolding @ kron_pow(x, 3)
    dense_time = time.perf_counter() - start

    start = time.perf_counter()
    for _ in range(10_000):
        hyper_rhs(model, x)
    hyper_time = time.perf_counter() - start
    assert hyper_time * 5 <= dense_time
