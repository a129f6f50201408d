"""Affine parametric families of polynomial systems."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from polymor.models.system import (
    BilinearOperator,
    Matrix,
    NonlinearOperator,
    PolynomialSystem,
    SystemDefinitionError,
)

LOGGER = logging.getLogger(__name__)

COEFFICIENT_CALLBACKS: Dict[str, Callable[[np.ndarray], float]] = {}


def register_coefficient(name: str) -> Callable[[Callable[[np.ndarray], float]], Callable[[np.ndarray], float]]:
    """Register a scalar coefficient function of the parameter vector under ``name``."""

    def decorator(func: Callable[[np.ndarray], float]) -> Callable[[np.ndarray], float]:
        COEFFICIENT_CALLBACKS[name] = func
        return func

    return decorator


@dataclass(frozen=True)
class CoefficientFunction:
    """Scalar weight of one affine term: constant 1, ``p[index]`` or a named callback."""

    kind: str = "constant"
    index: int = 0
    name: str = ""

    def __post_init__(self) -> None:
        if self.kind not in {"constant", "component", "callback"}:
            raise SystemDefinitionError(f"unknown coefficient kind: {self.kind}")
        if self.kind == "callback" and self.name not in COEFFICIENT_CALLBACKS:
            raise SystemDefinitionError(f"coefficient callback {self.name!r} is not registered")

    def __call__(self, p: np.ndarray) -> float:
        if self.kind == "constant":
            return 1.0
        if self.kind == "component":
            return float(p[self.index])
        return float(COEFFICIENT_CALLBACKS[self.name](p))

    @property
    def tag(self) -> str:
        if self.kind == "component":
            return f"component:{self.index}"
        if self.kind == "callback":
            return f"callback:{self.name}"
        return "constant"

    @classmethod
    def from_tag(cls, tag: str) -> "CoefficientFunction":
        kind, _, rest = tag.strip().partition(":")
        if kind == "component":
            return cls(kind="component", index=int(rest))
        if kind == "callback":
            return cls(kind="callback", name=rest)
        return cls(kind=kind)


CONSTANT = CoefficientFunction()

AffineTerms = Tuple[Tuple[CoefficientFunction, Matrix], ...]


@dataclass(frozen=True)
class AffineParametricSystem:
    """``M(p) = sum_i alpha_i(p) M_i`` for every matrix family of a polynomial system."""

    E: AffineTerms
    A: AffineTerms
    B: AffineTerms
    C: AffineTerms
    H: Dict[int, Tuple[Tuple[CoefficientFunction, NonlinearOperator], ...]] = field(default_factory=dict)
    N: Dict[int, Tuple[Tuple[CoefficientFunction, BilinearOperator], ...]] = field(default_factory=dict)
    parameter_box: Tuple[Tuple[float, float], ...] = ()
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for label in ("E", "A", "B", "C"):
            if not getattr(self, label):
                raise SystemDefinitionError(f"affine family {label} has no terms")
        for label in ("E", "A", "B", "C"):
            shapes = {matrix.shape for _, matrix in getattr(self, label)}
            if len(shapes) != 1:
                raise SystemDefinitionError(f"affine terms of {label} disagree in shape: {shapes}")

    @property
    def n(self) -> int:
        return self.A[0][1].shape[0]

    @property
    def m(self) -> int:
        return self.B[0][1].shape[1]

    @property
    def q(self) -> int:
        return self.C[0][1].shape[0]

    @property
    def d(self) -> int:
        return max([1, *self.H.keys(), *self.N.keys()])

    @property
    def n_params(self) -> int:
        return len(self.parameter_box)

    def in_box(self, p: np.ndarray) -> bool:
        return all(lo <= value <= hi for value, (lo, hi) in zip(p, self.parameter_box))


def _weighted_sum(terms: AffineTerms, p: np.ndarray) -> Matrix:
    parts = [alpha(p) * matrix for alpha, matrix in terms]
    total = reduce(lambda a, b: a + b, parts)
    return total.tocsr() if sp.issparse(total) else np.asarray(total)


def assemble_at_parameter(psys: AffineParametricSystem, p: Sequence[float]) -> PolynomialSystem:
    """Freeze the family at ``p``; points outside the box only warn."""

    p = np.atleast_1d(np.asarray(p, dtype=float))
    if psys.n_params and len(p) != psys.n_params:
        raise SystemDefinitionError(f"expected {psys.n_params} parameters, got {len(p)}")
    if psys.parameter_box and not psys.in_box(p):
        LOGGER.warning("Parameter %s lies outside the box %s; extrapolating", p, psys.parameter_box)

    H = {
        degree: NonlinearOperator.combine((alpha(p), op) for alpha, op in terms)
        for degree, terms in psys.H.items()
    }
    N = {
        degree: BilinearOperator(
            degree=degree,
            n=terms[0][1].n,
            m=terms[0][1].m,
            matrix=_weighted_sum(tuple((alpha, op.matrix) for alpha, op in terms), p),
        )
        for degree, terms in psys.N.items()
    }
    metadata = dict(psys.metadata)
    metadata["parameter"] = " ".join(repr(float(v)) for v in p)
    return PolynomialSystem(
        E=_weighted_sum(psys.E, p),
        A=_weighted_sum(psys.A, p),
        B=_weighted_sum(psys.B, p),
        C=_weighted_sum(psys.C, p),
        H=H,
        N=N,
        metadata=metadata,
    )


def constant_family(sys: PolynomialSystem, box: Optional[Sequence[Tuple[float, float]]] = None) -> AffineParametricSystem:
    """Wrap a non-parametric system as a family with constant coefficients."""

    return AffineParametricSystem(
        E=((CONSTANT, sys.E),),
        A=((CONSTANT, sys.A),),
        B=((CONSTANT, sys.B),),
        C=((CONSTANT, sys.C),),
        H={degree: ((CONSTANT, op),) for degree, op in sys.H.items()},
        N={degree: ((CONSTANT, op),) for degree, op in sys.N.items()},
        parameter_box=tuple(box or ()),
        metadata=dict(sys.metadata),
    )
