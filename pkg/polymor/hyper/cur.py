"""CUR hyper-reduction of projected nonlinear terms.

The projected operator ``M = row_kron(F_1 V, ..., F_xi V)`` (n x r^xi) is
approximated by ``C U R`` from selected columns and rows. Since
``R x^(xi) = prod_j (F_j V)[I_R] x``, the reduced term becomes
``Psi ((F~_1 x) * ... * (F~_xi x))`` with ``Psi = W^T C U``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from polymor.config import DEFAULT_CONFIG, HyperConfig
from polymor.core.kron import row_kron
from polymor.models.parametric import AffineParametricSystem
from polymor.models.system import (
    HadamardTerm,
    NonlinearOperator,
    PolynomialSystem,
    UnfoldingTooLargeError,
    with_nonlinear,
)
from polymor.processing.loewner import ReductionResult

LOGGER = logging.getLogger(__name__)

SELECTION_METHODS = ("greedy", "leverage")


class CurSelectionError(ValueError):
    """Raised for infeasible CUR sizes or unsupported terms."""


def _dense(matrix) -> np.ndarray:
    return matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)


@dataclass(frozen=True)
class CurHyperModel:
    """Sampled evaluator of one reduced nonlinear term.

    ``sampled`` holds ``(coefficient, factors)`` per Hadamard term of the
    full-order operator, each factor restricted to the rows ``row_idx``.
    ``stacked`` and ``Psi_tiled`` are derived from them for one-matmul
    evaluation: row block ``(k, t)`` of ``stacked`` is factor ``k`` of term
    ``t`` (coefficient folded into ``k = 0``).
    """

    degree: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    Psi: np.ndarray
    sampled: Tuple[Tuple[float, Tuple[np.ndarray, ...]], ...]
    stacked: np.ndarray = field(init=False, repr=False, compare=False)
    Psi_tiled: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        rows = np.asarray(self.row_idx, dtype=np.int64)
        object.__setattr__(self, "row_idx", rows)
        object.__setattr__(self, "col_idx", np.asarray(self.col_idx, dtype=np.int64))
        if len(np.unique(rows)) != len(rows):
            raise CurSelectionError("row indices must be distinct")
        if self.Psi.shape[1] != len(rows):
            raise CurSelectionError(f"Psi {self.Psi.shape} does not match {len(rows)} sampled rows")
        for _, factors in self.sampled:
            if len(factors) != self.degree or any(f.shape[0] != len(rows) for f in factors):
                raise CurSelectionError("sampled factors do not match the degree or the row count")
        blocks = [
            [_dense(factors[k]) * (coefficient if k == 0 else 1.0) for coefficient, factors in self.sampled]
            for k in range(self.degree)
        ]
        stacked = np.vstack([f for block in blocks for f in block]) if self.sampled else np.zeros((0, self.order))
        object.__setattr__(self, "stacked", np.ascontiguousarray(stacked))
        object.__setattr__(self, "Psi_tiled", np.ascontiguousarray(np.tile(self.Psi, len(self.sampled))))

    @property
    def n_rows(self) -> int:
        return len(self.row_idx)

    @property
    def n_cols(self) -> int:
        return len(self.col_idx)

    @property
    def order(self) -> int:
        return self.Psi.shape[0]

    def operator(self) -> NonlinearOperator:
        """The evaluator as a nonlinear operator usable inside a reduced system."""

        terms = tuple(HadamardTerm(coef, factors, output=self.Psi) for coef, factors in self.sampled)
        return NonlinearOperator(degree=self.degree, n=self.sampled[0][1][0].shape[1], terms=terms)


def _greedy_indices(M: np.ndarray, count: int) -> np.ndarray:
    _, _, pivots = sla.qr(M, mode="economic", pivoting=True)
    return np.sort(pivots[:count])


def _leverage_indices(M: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    _, s, Vh = sla.svd(M, full_matrices=False)
    rank = max(1, min(count, int(np.sum(s > np.finfo(float).eps * max(M.shape) * s[0]))))
    scores = np.sum(Vh[:rank] ** 2, axis=0)
    total = scores.sum()
    if total == 0:
        probabilities = np.full(M.shape[1], 1.0 / M.shape[1])
    else:
        # positive floor so zero-score columns can still fill the sample
        probabilities = scores / total + 1e-15
        probabilities = probabilities / probabilities.sum()
    return np.sort(rng.choice(M.shape[1], size=count, replace=False, p=probabilities))


def cur_decompose(
    M: np.ndarray,
    n_c: int,
    n_r: int,
    method: Optional[str] = None,
    seed: Optional[int] = None,
    config: Optional[HyperConfig] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(col_idx, row_idx, U)`` with ``U = pinv(C) M pinv(R)``."""

    cfg = config or DEFAULT_CONFIG.hyper
    method = method or cfg.method
    M = np.asarray(M)
    rows, cols = M.shape
    if not 1 <= n_c <= cols or not 1 <= n_r <= rows:
        raise CurSelectionError(f"cannot select {n_c} columns and {n_r} rows from a {rows}x{cols} matrix")
    if method == "greedy":
        col_idx = _greedy_indices(M, n_c)
        row_idx = _greedy_indices(M.T, n_r)
    elif method == "leverage":
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        col_idx = _leverage_indices(M, n_c, rng)
        row_idx = _leverage_indices(M.T, n_r, rng)
    else:
        raise CurSelectionError(f"unknown selection method {method!r}; expected one of {SELECTION_METHODS}")
    C = M[:, col_idx]
    R = M[row_idx, :]
    U = sla.pinv(C, rtol=cfg.pinv_rtol) @ M @ sla.pinv(R, rtol=cfg.pinv_rtol)
    return col_idx, row_idx, U


def _hadamard_terms(op: NonlinearOperator) -> Tuple[HadamardTerm, ...]:
    if not op.terms or any(t.output is not None for t in op.terms):
        raise CurSelectionError(f"H_{op.degree} must be given in full-order Hadamard form")
    return op.terms


def build_hyper(
    result: ReductionResult,
    degree: int,
    n_c: Optional[int] = None,
    n_r: Optional[int] = None,
    method: Optional[str] = None,
    config: Optional[HyperConfig] = None,
) -> CurHyperModel:
    """CUR evaluator for the reduced degree-``degree`` term of ``result``."""

    return hyper_from_bases(result.source, result.V_eff, result.W_eff, degree, n_c, n_r, method, config)


def hyper_from_bases(
    source: PolynomialSystem,
    V: np.ndarray,
    W: np.ndarray,
    degree: int,
    n_c: Optional[int] = None,
    n_r: Optional[int] = None,
    method: Optional[str] = None,
    config: Optional[HyperConfig] = None,
) -> CurHyperModel:
    """CUR evaluator of ``W^T H_degree (V kron ... kron V)`` for a full-order ``source``."""

    cfg = config or DEFAULT_CONFIG.hyper
    if isinstance(source, AffineParametricSystem):
        raise CurSelectionError("hyper-reduction is available for non-parametric systems only")
    if degree not in source.H:
        raise CurSelectionError(f"system has no H_{degree}")
    terms = _hadamard_terms(source.H[degree])
    r = V.shape[1]
    width = r**degree
    if width > cfg.max_columns:
        raise UnfoldingTooLargeError(
            f"the projected H_{degree} has {width} columns (r={r}); lower the order or raise the column cap"
        )
    default = min(cfg.oversampling * r, width)
    n_c = default if n_c is None else n_c
    n_r = min(default, source.n) if n_r is None else n_r

    projected = [tuple(np.asarray(f @ V) for f in term.factors) for term in terms]
    M = sum(term.coefficient * row_kron(list(factors)) for term, factors in zip(terms, projected))
    col_idx, row_idx, U = cur_decompose(M, n_c, n_r, method=method, config=cfg)
    Psi = W.T @ M[:, col_idx] @ U
    sampled = tuple(
        (float(term.coefficient), tuple(f[row_idx] for f in factors)) for term, factors in zip(terms, projected)
    )
    model = CurHyperModel(degree=degree, row_idx=row_idx, col_idx=col_idx, Psi=Psi, sampled=sampled)
    if LOGGER.isEnabledFor(logging.DEBUG):
        R = M[row_idx]
        error = np.linalg.norm(M - M[:, col_idx] @ U @ R) / max(np.linalg.norm(M), np.finfo(float).tiny)
        LOGGER.debug("CUR relative reconstruction error %.3e", error)
    LOGGER.info("CUR hyper-reduction of H_%d: %d columns, %d rows (r=%d)", degree, n_c, n_r, r)
    return model


def hyper_rhs(model: CurHyperModel, x: np.ndarray) -> np.ndarray:
    """``Psi ((F~_1 x) * ... * (F~_xi x))`` summed over the sampled terms."""

    z = (model.stacked @ np.asarray(x).ravel()).reshape(model.degree, -1)
    values = z[0]
    for row in z[1:]:
        values = values * row
    return model.Psi_tiled @ values


def with_hyper(rom: PolynomialSystem, *models: CurHyperModel) -> PolynomialSystem:
    """Copy of ``rom`` whose nonlinear terms are evaluated through CUR models."""

    replacements = {}
    for model in models:
        if model.order != rom.n:
            raise CurSelectionError(f"CUR model of order {model.order} does not fit a ROM of order {rom.n}")
        if model.degree not in rom.H:
            raise CurSelectionError(f"ROM has no H_{model.degree} to replace")
        replacements[model.degree] = model.operator()
    hyper = with_nonlinear(rom, replacements)
    return replace(hyper, metadata={**rom.metadata, "hyper_reduced": ",".join(str(m.degree) for m in models)})
