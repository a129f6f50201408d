"""Loewner pencils, order selection and projected reduced models."""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from polymor.config import DEFAULT_CONFIG, InterpolationConfig, ReductionConfig
from polymor.models.parametric import AffineParametricSystem
from polymor.models.system import (
    BilinearOperator,
    HadamardTerm,
    NonlinearOperator,
    PolynomialSystem,
    SystemDefinitionError,
)
from polymor.processing.interpolation import (
    EmptyBasisError,
    InterpolationSet,
    RawBases,
    build_bases,
    orth_trim,
)

LOGGER = logging.getLogger(__name__)

AnySystem = Union[PolynomialSystem, AffineParametricSystem]


class CoincidentPointsError(ZeroDivisionError):
    """Raised when a left and a right interpolation point coincide."""


class OrderSelectionError(ValueError):
    """Raised when the requested order exceeds the available rank."""


@dataclass(frozen=True)
class LoewnerPencil:
    """Projected Loewner blocks with the SVDs used for order selection.

    ``L_blocks`` holds ``-W^T E_i V`` per affine E term and ``Ls_blocks``
    ``-W^T A_i V`` per affine A term; non-parametric systems have one of each.
    """

    L_blocks: Tuple[np.ndarray, ...]
    Ls_blocks: Tuple[np.ndarray, ...]
    Y1: np.ndarray
    singular_values_row: np.ndarray
    X2: np.ndarray
    singular_values_col: np.ndarray

    @property
    def L(self) -> np.ndarray:
        return self.L_blocks[0]

    @property
    def Ls(self) -> np.ndarray:
        return self.Ls_blocks[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.L_blocks[0].shape


def _project(W: np.ndarray, matrix, V: np.ndarray) -> np.ndarray:
    return np.asarray(W.T @ (matrix @ V))


def build_pencil(system: AnySystem, V: np.ndarray, W: np.ndarray) -> LoewnerPencil:
    """Pencil from raw (untrimmed) bases; E blocks precede A blocks in the SVDs."""

    if V.ndim != 2 or W.ndim != 2 or V.shape[1] == 0 or W.shape[1] == 0:
        raise EmptyBasisError(f"cannot build a pencil from bases of shape {V.shape} and {W.shape}")
    if isinstance(system, AffineParametricSystem):
        e_terms = [matrix for _, matrix in system.E]
        a_terms = [matrix for _, matrix in system.A]
    else:
        e_terms, a_terms = [system.E], [system.A]
    L_blocks = tuple(-_project(W, matrix, V) for matrix in e_terms)
    Ls_blocks = tuple(-_project(W, matrix, V) for matrix in a_terms)
    blocks = L_blocks + Ls_blocks
    Y1, s_row, _ = sla.svd(np.hstack(blocks), full_matrices=False)
    _, s_col, Vh = sla.svd(np.vstack(blocks), full_matrices=False)
    LOGGER.debug("Pencil %s with %d affine blocks", L_blocks[0].shape, len(blocks))
    return LoewnerPencil(
        L_blocks=L_blocks,
        Ls_blocks=Ls_blocks,
        Y1=Y1,
        singular_values_row=s_row,
        X2=Vh.T,
        singular_values_col=s_col,
    )


def divided_difference_pencil(
    right_values: Sequence[complex],
    sigma: Sequence[complex],
    left_values: Sequence[complex],
    mu: Sequence[complex],
) -> Tuple[np.ndarray, np.ndarray]:
    """Classical Loewner matrices of SISO transfer data ``H(sigma_j)`` and ``H(mu_i)``."""

    sigma = np.asarray(sigma)
    mu = np.asarray(mu)
    h_right = np.asarray(right_values).ravel()
    h_left = np.asarray(left_values).ravel()
    gaps = mu[:, None] - sigma[None, :]
    if np.any(gaps == 0):
        i, j = np.argwhere(gaps == 0)[0]
        raise CoincidentPointsError(f"left point mu[{i}] equals right point sigma[{j}] = {sigma[j]}")
    L = (h_left[:, None] - h_right[None, :]) / gaps
    Ls = ((mu * h_left)[:, None] - (sigma * h_right)[None, :]) / gaps
    if np.isrealobj(right_values) and np.isrealobj(left_values) and np.isrealobj(sigma) and np.isrealobj(mu):
        return L.real, Ls.real
    return L, Ls


def _numerical_rank(values: np.ndarray, size: int) -> int:
    if values.size == 0 or values[0] == 0:
        return 0
    return int(np.sum(values > np.finfo(float).eps * size * values[0]))


def select_order(
    pencil: LoewnerPencil,
    order: Optional[int] = None,
    threshold: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray, int]:
    """Leading singular vector blocks ``(Y_r, X_r, r)``.

    Without an explicit order, ``r`` is the smallest order whose next relative
    singular value drops below ``threshold`` in both SVDs.
    """

    s_row, s_col = pencil.singular_values_row, pencil.singular_values_col
    size = max(pencil.shape)
    available = min(_numerical_rank(s_row, size), _numerical_rank(s_col, size))
    if available == 0:
        raise OrderSelectionError("the pencil is numerically zero")
    if order is None:
        tau = DEFAULT_CONFIG.reduction.threshold if threshold is None else threshold
        if not 0 < tau < 1:
            raise OrderSelectionError(f"threshold must lie in (0, 1), got {tau}")
        order = max(int(np.sum(s_row / s_row[0] >= tau)), int(np.sum(s_col / s_col[0] >= tau)))
        order = min(order, available)
    elif order > available:
        raise OrderSelectionError(f"order {order} exceeds the available pencil rank {available}")
    elif order < 1:
        raise OrderSelectionError(f"order must be positive, got {order}")
    return pencil.Y1[:, :order], pencil.X2[:, :order], order


def _orthonormal(Q: np.ndarray, label: str, tol: float) -> np.ndarray:
    gram = Q.T @ Q
    if np.linalg.norm(gram - np.eye(Q.shape[1])) <= tol * max(1, Q.shape[1]):
        return Q
    LOGGER.warning("%s is not orthonormal; re-orthonormalizing", label)
    warnings.warn(f"{label} is not orthonormal and was re-orthonormalized", RuntimeWarning, stacklevel=3)
    return sla.qr(Q, mode="economic")[0]


def _effective_basis(M: np.ndarray, order: int, label: str) -> np.ndarray:
    Q = orth_trim(M, tol=np.finfo(float).eps * max(M.shape))
    if Q.shape[1] < order:
        raise OrderSelectionError(f"{label} has numerical rank {Q.shape[1]}, below the order {order}")
    return Q


def _dense(matrix) -> np.ndarray:
    return matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)


def _project_nonlinear(op: NonlinearOperator, V: np.ndarray, W: np.ndarray) -> NonlinearOperator:
    return NonlinearOperator(degree=op.degree, n=V.shape[1], unfolding=op.project(V, W))


def _project_bilinear(op: BilinearOperator, V: np.ndarray, W: np.ndarray) -> BilinearOperator:
    return BilinearOperator(degree=op.degree, n=V.shape[1], m=op.m, matrix=op.project(V, W))


def _e_condition(E_hat: np.ndarray, limit: float) -> Dict[str, str]:
    condition = float(np.linalg.cond(E_hat))
    diagnostics = {"E_condition": repr(condition)}
    if not np.isfinite(condition) or condition > limit:
        LOGGER.warning("Reduced E is singular or ill-conditioned (cond = %.3e); the model may be unusable", condition)
        diagnostics["E_singular"] = "true"
    return diagnostics


def assemble_rom(
    system: AnySystem,
    V_eff: np.ndarray,
    W_eff: np.ndarray,
    config: Optional[ReductionConfig] = None,
) -> Tuple[AnySystem, Dict[str, str]]:
    """Petrov-Galerkin projection with dense reduced matrices.

    Returns the reduced model together with diagnostics on the reduced E.
    """

    cfg = config or DEFAULT_CONFIG.reduction
    one_sided = W_eff is V_eff
    V_eff = _orthonormal(V_eff, "V_eff", cfg.orthonormality_tol)
    W_eff = V_eff if one_sided else _orthonormal(W_eff, "W_eff", cfg.orthonormality_tol)
    if V_eff.shape != W_eff.shape:
        raise SystemDefinitionError(f"V_eff {V_eff.shape} and W_eff {W_eff.shape} differ in shape")
    r = V_eff.shape[1]

    if isinstance(system, AffineParametricSystem):
        rom = AffineParametricSystem(
            E=tuple((alpha, _project(W_eff, M, V_eff)) for alpha, M in system.E),
            A=tuple((alpha, _project(W_eff, M, V_eff)) for alpha, M in system.A),
            B=tuple((alpha, np.asarray(W_eff.T @ _dense(M))) for alpha, M in system.B),
            C=tuple((alpha, np.asarray(_dense(M) @ V_eff)) for alpha, M in system.C),
            H={
                degree: tuple((alpha, _project_nonlinear(op, V_eff, W_eff)) for alpha, op in terms)
                for degree, terms in system.H.items()
            },
            N={
                degree: tuple((alpha, _project_bilinear(op, V_eff, W_eff)) for alpha, op in terms)
                for degree, terms in system.N.items()
            },
            parameter_box=system.parameter_box,
            metadata={**system.metadata, "reduced_order": str(r)},
        )
        if system.parameter_box:
            center = np.array([(lo + hi) / 2 for lo, hi in system.parameter_box])
            E_center = sum(alpha(center) * M for alpha, M in rom.E)
        else:
            E_center = sum(M for _, M in rom.E)
        return rom, _e_condition(E_center, cfg.condition_limit)

    rom = PolynomialSystem(
        E=_project(W_eff, system.E, V_eff),
        A=_project(W_eff, system.A, V_eff),
        B=np.asarray(W_eff.T @ _dense(system.B)),
        C=np.asarray(_dense(system.C) @ V_eff),
        H={degree: _project_nonlinear(op, V_eff, W_eff) for degree, op in system.H.items()},
        N={degree: _project_bilinear(op, V_eff, W_eff) for degree, op in system.N.items()},
        metadata={**system.metadata, "reduced_order": str(r)},
    )
    return rom, _e_condition(rom.E, cfg.condition_limit)


@dataclass(frozen=True)
class ReductionResult:
    """Every intermediate artifact of one reduction run."""

    rom: AnySystem
    source: AnySystem
    raw: RawBases
    pencil: LoewnerPencil
    Y_r: np.ndarray
    X_r: np.ndarray
    order: int
    V_eff: np.ndarray
    W_eff: np.ndarray
    one_sided: bool = False
    timings: Dict[str, float] = field(default_factory=dict)
    diagnostics: Dict[str, str] = field(default_factory=dict)


def _normalize_columns(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=0)
    norms[norms == 0] = 1.0
    return M / norms


def prepare_pencil(
    system: AnySystem,
    raw: RawBases,
    one_sided: bool = False,
    config: Optional[ReductionConfig] = None,
) -> Tuple[np.ndarray, np.ndarray, LoewnerPencil]:
    """Column-normalized bases (``W = V`` when one-sided) and their pencil."""

    cfg = config or DEFAULT_CONFIG.reduction
    V = _normalize_columns(raw.V) if cfg.normalize_columns else raw.V
    W = V if one_sided else (_normalize_columns(raw.W) if cfg.normalize_columns else raw.W)
    return V, W, build_pencil(system, V, W)


def reduce(
    system: AnySystem,
    iset: InterpolationSet,
    order: Optional[int] = None,
    threshold: Optional[float] = None,
    one_sided: bool = False,
    config: Optional[ReductionConfig] = None,
    interpolation: Optional[InterpolationConfig] = None,
    workers: Optional[int] = None,
) -> ReductionResult:
    """Bases, pencil, order selection, effective bases and projection in sequence."""

    cfg = config or DEFAULT_CONFIG.reduction
    timings: Dict[str, float] = {}

    start = time.perf_counter()
    raw = build_bases(system, iset, config=interpolation, workers=workers)
    timings["bases"] = time.perf_counter() - start

    start = time.perf_counter()
    V, W, pencil = prepare_pencil(system, raw, one_sided, cfg)
    timings["pencil"] = time.perf_counter() - start

    start = time.perf_counter()
    Y_r, X_r, r = select_order(pencil, order, threshold if threshold is not None else cfg.threshold)
    V_eff = _effective_basis(V @ X_r, r, "V_eff")
    W_eff = V_eff if one_sided else _effective_basis(W @ Y_r, r, "W_eff")
    timings["selection"] = time.perf_counter() - start

    start = time.perf_counter()
    rom, diagnostics = assemble_rom(system, V_eff, W_eff, cfg)
    timings["assembly"] = time.perf_counter() - start

    LOGGER.info(
        "Reduced order %d -> %d (%s, raw bases %d/%d columns) in %.2fs",
        system.n,
        r,
        "one-sided" if one_sided else "two-sided",
        raw.V.shape[1],
        raw.W.shape[1],
        sum(timings.values()),
    )
    return ReductionResult(
        rom=rom,
        source=system,
        raw=raw,
        pencil=pencil,
        Y_r=Y_r,
        X_r=X_r,
        order=r,
        V_eff=V_eff,
        W_eff=W_eff,
        one_sided=one_sided,
        timings=timings,
        diagnostics=diagnostics,
    )


def _hadamard_projected(op: NonlinearOperator, V: np.ndarray, W: np.ndarray) -> NonlinearOperator:
    if not op.terms or any(t.output is not None for t in op.terms):
        raise SystemDefinitionError(f"H_{op.degree} has no full-order Hadamard form to project")
    terms = tuple(
        HadamardTerm(t.coefficient, tuple(np.asarray(f @ V) for f in t.factors), output=W.T) for t in op.terms
    )
    return NonlinearOperator(degree=op.degree, n=V.shape[1], terms=terms)


def hadamard_rom(result: ReductionResult) -> AnySystem:
    """Reduced model that evaluates nonlinear terms as ``W^T ((A_1 V x) * ... )``.

    Avoids the dense ``r x r^xi`` unfoldings at the cost of O(n r) work per
    evaluation.
    """

    V, W, rom = result.V_eff, result.W_eff, result.rom
    if isinstance(result.source, AffineParametricSystem):
        H = {
            degree: tuple((alpha, _hadamard_projected(op, V, W)) for alpha, op in terms)
            for degree, terms in result.source.H.items()
        }
        return AffineParametricSystem(
            E=rom.E, A=rom.A, B=rom.B, C=rom.C, H=H, N=rom.N,
            parameter_box=rom.parameter_box, metadata={**rom.metadata, "nonlinear_storage": "hadamard"},
        )
    H = {degree: _hadamard_projected(op, V, W) for degree, op in result.source.H.items()}
    return PolynomialSystem(
        E=rom.E, A=rom.A, B=rom.B, C=rom.C, H=H, N=rom.N,
        metadata={**rom.metadata, "nonlinear_storage": "hadamard"},
    )
