from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from polymor.benchmarks import make_chafee_parametric, make_exp_fixture, make_fhn
from polymor.models.parametric import CONSTANT, AffineParametricSystem, assemble_at_parameter
from polymor.models.system import NonlinearOperator, PolynomialSystem, SingularSystemError, rhs
from polymor.services.system_store import (
    MANIFEST,
    SystemStoreError,
    load_matrix,
    load_system,
    read_manifest,
    save_matrix,
    save_system,
)


def test_polynomial_system_round_trip(tmp_path: Path):
    system = make_fhn(8)
    save_system(system, tmp_path / "fhn")
    loaded = load_system(tmp_path / "fhn")
    assert isinstance(loaded, PolynomialSystem)
    assert (loaded.n, loaded.m, loaded.q) == (16, 2, 2)
    assert sorted(loaded.H) == [2, 3]
    assert loaded.metadata["benchmark"] == "fhn"
    x = np.random.default_rng(0).standard_normal(16)
    assert np.allclose(rhs(loaded, x, [0.3, 1.0]), rhs(system, x, [0.3, 1.0]), rtol=1e-15, atol=1e-12)


def test_manifest_records_storage_and_metadata(tmp_path: Path):
    save_system(make_exp_fixture(), tmp_path)
    manifest = read_manifest(tmp_path)
    assert manifest["kind"] == "polynomial"
    assert manifest["d"] == "5"
    assert manifest["H.degrees"] == "2,4,5"
    assert manifest["H4.0.storage"] == "hadamard"
    assert manifest["N.degrees"] == "1"
    assert manifest["meta.output"] == "x"


def test_parametric_round_trip(tmp_path: Path):
    family = make_chafee_parametric(10)
    save_system(family, tmp_path)
    loaded = load_system(tmp_path)
    assert isinstance(loaded, AffineParametricSystem)
    assert loaded.parameter_box == ((0.25, 2.0),)
    expected = assemble_at_parameter(family, [0.7]).A.toarray()
    assert np.allclose(assemble_at_parameter(loaded, [0.7]).A.toarray(), expected)


def test_singular_E_is_rejected_on_load(tmp_path: Path):
    family = make_chafee_parametric(10)
    singular = sp.diags(np.r_[0.0, np.ones(9)]).tocsr()
    singular.eliminate_zeros()
    save_system(dataclasses.replace(family, E=((CONSTANT, singular),)), tmp_path / "family")
    with pytest.raises(SingularSystemError):
        load_system(tmp_path / "family")

    frozen = assemble_at_parameter(family, [1.0])
    save_system(dataclasses.replace(frozen, E=singular), tmp_path / "frozen")
    with pytest.raises(SingularSystemError):
        load_system(tmp_path / "frozen")


def test_dense_reduced_system_round_trip(tmp_path: Path):
    rng = np.random.default_rng(1)
    unfolding = rng.standard_normal((3, 9))
    system = PolynomialSystem(
        E=np.eye(3),
        A=-2 * np.eye(3) + 0.1 * rng.standard_normal((3, 3)),
        B=rng.standard_normal((3, 1)),
        C=rng.standard_normal((1, 3)),
        H={2: NonlinearOperator(degree=2, n=3, unfolding=unfolding)},
    )
    save_system(system, tmp_path)
    assert read_manifest(tmp_path)["H2.0.storage"] == "explicit"
    loaded = load_system(tmp_path)
    # 17 significant digits reproduce doubles exactly
    assert np.array_equal(loaded.H[2].unfolding, unfolding)
    assert np.array_equal(loaded.A, system.A)


def test_matrix_market_formats(tmp_path: Path):
    sparse = sp.random(4, 5, density=0.4, random_state=2, format="csr")
    save_matrix(tmp_path / "s.mtx", sparse)
    save_matrix(tmp_path / "d.mtx", np.arange(6.0).reshape(2, 3))
    assert "coordinate" in (tmp_path / "s.mtx").read_text().splitlines()[0]
    assert "array" in (tmp_path / "d.mtx").read_text().splitlines()[0]
    assert np.allclose(load_matrix(tmp_path / "s.mtx").toarray(), sparse.toarray())


def test_missing_files_raise_store_errors(tmp_path: Path):
    with pytest.raises(SystemStoreError):
        load_system(tmp_path / "absent")
    (tmp_path / MANIFEST).write_text("kind: polynomial\nn: 2\n", encoding="utf-8")
    with pytest.raises(SystemStoreError):
        load_system(tmp_path)
    with pytest.raises(SystemStoreError):
        load_matrix(tmp_path / "nothing.mtx")


def test_malformed_manifest_line(tmp_path: Path):
    (tmp_path / MANIFEST).write_text("kind polynomial\n", encoding="utf-8")
    with pytest.raises(SystemStoreError):
        read_manifest(tmp_path)
