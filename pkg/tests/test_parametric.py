from __future__ import annotations

import logging

import numpy as np
import pytest
import scipy.sparse as sp

from polymor.benchmarks import make_chafee, make_chafee_parametric
from polymor.models.parametric import (
    CONSTANT,
    AffineParametricSystem,
    CoefficientFunction,
    assemble_at_parameter,
    constant_family,
    register_coefficient,
)
from polymor.models.system import SystemDefinitionError, rhs


def test_chafee_family_freezes_to_shifted_diffusion():
    family = make_chafee_parametric(15)
    plain = make_chafee(15)
    frozen = assemble_at_parameter(family, [1.0])
    assert np.allclose(frozen.A.toarray(), plain.A.toarray())
    shifted = assemble_at_parameter(family, [0.25])
    assert np.allclose((plain.A - shifted.A).toarray(), 0.75 * np.eye(15))
    assert frozen.metadata["parameter"] == "1.0"


def test_frozen_rhs_matches_hand_assembly():
    family = make_chafee_parametric(10)
    x = np.linspace(-1, 1, 10)
    frozen = assemble_at_parameter(family, [2.0])
    plain = make_chafee(10)
    expected = rhs(plain, x, [3.0]) + 1.0 * x
    assert np.allclose(rhs(frozen, x, [3.0]), expected)


def test_out_of_box_parameter_warns(caplog):
    family = make_chafee_parametric(8)
    with caplog.at_level(logging.WARNING):
        assemble_at_parameter(family, [5.0])
    assert "outside the box" in caplog.text


def test_parameter_count_is_checked():
    family = make_chafee_parametric(8)
    with pytest.raises(SystemDefinitionError):
        assemble_at_parameter(family, [1.0, 2.0])


def test_coefficient_tags_round_trip():
    for coefficient in (CONSTANT, CoefficientFunction(kind="component", index=2)):
        assert CoefficientFunction.from_tag(coefficient.tag) == coefficient
    with pytest.raises(SystemDefinitionError):
        CoefficientFunction(kind="polynomial")
    with pytest.raises(SystemDefinitionError):
        CoefficientFunction(kind="callback", name="never-registered")


def test_registered_callback_weights_terms():
    @register_coefficient("square-of-first")
    def square(p):
        return p[0] ** 2

    eye = sp.identity(2, format="csr")
    family = AffineParametricSystem(
        E=((CONSTANT, eye),),
        A=((CONSTANT, -eye), (CoefficientFunction(kind="callback", name="square-of-first"), -eye)),
        B=((CONSTANT, np.ones((2, 1))),),
        C=((CONSTANT, np.ones((1, 2))),),
        parameter_box=((0.0, 3.0),),
    )
    frozen = assemble_at_parameter(family, [3.0])
    assert np.allclose(frozen.A.toarray(), -10 * np.eye(2))


def test_family_rejects_mismatched_terms():
    with pytest.raises(SystemDefinitionError):
        AffineParametricSystem(
            E=((CONSTANT, sp.identity(2)),),
            A=((CONSTANT, sp.identity(2)), (CONSTANT, sp.identity(3))),
            B=((CONSTANT, np.ones((2, 1))),),
            C=((CONSTANT, np.ones((1, 2))),),
        )
    with pytest.raises(SystemDefinitionError):
        AffineParametricSystem(E=(), A=((CONSTANT, sp.identity(2)),), B=(), C=())


def test_constant_family_round_trip(small_fhn):
    family = constant_family(small_fhn)
    frozen = assemble_at_parameter(family, [])
    x = np.random.default_rng(0).standard_normal(small_fhn.n)
    assert np.allclose(rhs(frozen, x, [1.0, 1.0]), rhs(small_fhn, x, [1.0, 1.0]))
