"""Polynomial system data model and its right-hand side.

A polynomial system reads

    E x' = A x + sum_xi H_xi x^(xi) + sum_eta N_eta (u kron x^(eta)) + B u,
    y    = C x,

where ``x^(xi)`` is the Kronecker power. Nonlinearities are stored in Hadamard
form (sums of ``c * (A_1 x) * ... * (A_xi x)``), as explicit mode-1
unfoldings, or both.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import reduce
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from polymor.config import DEFAULT_CONFIG
from polymor.core.kron import (
    KroneckerError,
    ModeUnfolding,
    contract_vectors,
    kron_pow,
    mode2_from_mode1,
    row_kron,
)
from polymor.core.linalg import FactorizationError, factorize

Matrix = Union[np.ndarray, sp.spmatrix]

LOGGER = logging.getLogger(__name__)


class SystemDefinitionError(ValueError):
    """Raised when system matrices have inconsistent shapes."""


class SingularSystemError(RuntimeError):
    """Raised when the mass matrix E cannot be factorized."""


class UnfoldingTooLargeError(ValueError):
    """Raised when an explicit unfolding would exceed the configured column cap."""


def _add(left: Matrix, right: Matrix) -> Matrix:
    if sp.issparse(left) and sp.issparse(right):
        return (left + right).tocsr()
    return _as_dense(left) + _as_dense(right)


def _as_dense(matrix: Matrix) -> np.ndarray:
    return matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)


def _scale_rows(weights: np.ndarray, matrix: Matrix) -> Matrix:
    if sp.issparse(matrix):
        return sp.diags(weights) @ matrix
    return weights[:, None] * np.asarray(matrix)


def _check_cap(n: int, degree: int, cap: Optional[int]) -> None:
    cap = DEFAULT_CONFIG.unfolding.max_columns if cap is None else cap
    if n**degree > cap:
        raise UnfoldingTooLargeError(
            f"explicit unfolding needs {n}^{degree} = {n**degree} columns, cap is {cap}"
        )


@dataclass(frozen=True)
class HadamardTerm:
    """``coefficient * output @ ((F_1 x) * ... * (F_xi x))``.

    Full-order terms have square factors and no output map. Projected and
    sampled terms (reduced models, CUR evaluators) carry rectangular factors
    and an output map.
    """

    coefficient: float
    factors: Tuple[Matrix, ...]
    output: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        factors = tuple(self.factors)
        object.__setattr__(self, "factors", factors)
        if not factors:
            raise SystemDefinitionError("Hadamard term needs at least one factor")
        shape = factors[0].shape
        if any(f.shape != shape for f in factors):
            raise SystemDefinitionError(
                f"Hadamard factors must share one shape, got {[f.shape for f in factors]}"
            )
        if self.output is None and shape[0] != shape[1]:
            raise SystemDefinitionError(f"Hadamard factors must be square, got {shape}")
        if self.output is not None and self.output.shape[1] != shape[0]:
            raise SystemDefinitionError(
                f"output map {self.output.shape} does not match factor rows {shape[0]}"
            )

    @property
    def degree(self) -> int:
        return len(self.factors)

    @property
    def n_in(self) -> int:
        return self.factors[0].shape[1]

    @property
    def n_out(self) -> int:
        return self.factors[0].shape[0] if self.output is None else self.output.shape[0]

    def _finish(self, sampled: np.ndarray) -> np.ndarray:
        values = self.coefficient * sampled
        return values if self.output is None else self.output @ values

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self._finish(reduce(np.multiply, [f @ x for f in self.factors]))

    def apply_multilinear(self, vectors: Sequence[np.ndarray]) -> np.ndarray:
        """Evaluate on ``y_1 kron ... kron y_xi`` (``y_1`` leftmost)."""

        if len(vectors) != self.degree:
            raise SystemDefinitionError(f"expected {self.degree} vectors, got {len(vectors)}")
        return self._finish(reduce(np.multiply, [f @ y for f, y in zip(self.factors, vectors)]))

    def adjoint_slot(self, w: np.ndarray, others: Sequence[np.ndarray]) -> np.ndarray:
        """Gradient of ``w^T H(o_1 kron ... kron o_{xi-1} kron y)`` with respect to ``y``."""

        left = w if self.output is None else self.output.T @ w
        weights = self.coefficient * left
        for factor, vec in zip(self.factors[:-1], others):
            weights = weights * (factor @ vec)
        return self.factors[-1].T @ weights

    def jacobian(self, x: np.ndarray) -> Matrix:
        values = [f @ x for f in self.factors]
        total: Optional[Matrix] = None
        for j, factor in enumerate(self.factors):
            partial = self.coefficient * reduce(
                np.multiply, [v for l, v in enumerate(values) if l != j], np.ones(factor.shape[0])
            )
            part = _scale_rows(partial, factor)
            total = part if total is None else _add(total, part)
        if self.output is not None:
            return self.output @ _as_dense(total)
        return total

    def explicit(self, cap: Optional[int] = None) -> sp.csr_matrix:
        if self.output is not None:
            raise SystemDefinitionError("explicit unfoldings exist only for full-order terms")
        _check_cap(self.n_in, self.degree, cap)
        factors = [sp.csr_matrix(f) for f in self.factors]
        return (self.coefficient * row_kron(factors)).tocsr()

    def project(self, V: np.ndarray, W: np.ndarray) -> np.ndarray:
        """Dense ``W^T H (V kron ... kron V)`` through the row-wise Kronecker product."""

        left = W.T if self.output is None else W.T @ self.output
        face = row_kron([np.asarray(f @ V) for f in self.factors])
        return self.coefficient * (left @ face)

    def scaled(self, alpha: float) -> "HadamardTerm":
        return replace(self, coefficient=self.coefficient * alpha)


def _unfolding_indices(cols: np.ndarray, n: int, degree: int) -> List[np.ndarray]:
    # Kronecker positions 1..degree, position 1 slowest.
    indices: List[np.ndarray] = [np.empty(0, dtype=np.int64)] * degree
    rest = cols.astype(np.int64, copy=True)
    for pos in range(degree - 1, -1, -1):
        indices[pos] = rest % n
        rest //= n
    return indices


def unfolding_jacobian(unfolding: Matrix, x: np.ndarray, degree: int) -> Matrix:
    """Derivative of ``M @ x^(degree)`` summed over the Kronecker positions."""

    n = len(x)
    rows = unfolding.shape[0]
    if sp.issparse(unfolding):
        coo = unfolding.tocoo()
        idx = _unfolding_indices(coo.col, n, degree)
        taken = [x[i] for i in idx]
        out_rows, out_cols, out_vals = [], [], []
        for p in range(degree):
            weight = coo.data.astype(np.result_type(coo.data, x), copy=True)
            for l in range(degree):
                if l != p:
                    weight = weight * taken[l]
            out_rows.append(coo.row)
            out_cols.append(idx[p])
            out_vals.append(weight)
        return sp.csr_matrix(
            (np.concatenate(out_vals), (np.concatenate(out_rows), np.concatenate(out_cols))),
            shape=(rows, n),
        )

    tensor = np.asarray(unfolding).reshape((rows,) + (n,) * degree)
    total = np.zeros((rows, n), dtype=np.result_type(tensor, x))
    for keep in range(1, degree + 1):
        partial = tensor
        for axis in range(degree, 0, -1):
            if axis != keep:
                partial = np.tensordot(partial, x, axes=([axis], [0]))
        total += partial
    return total


def project_unfolding(unfolding: Matrix, V: np.ndarray, W: np.ndarray, degree: int) -> np.ndarray:
    """Dense ``W^T M (V kron ... kron V)`` without forming ``V^(degree)``."""

    n = V.shape[0]
    if sp.issparse(unfolding):
        coo = unfolding.tocoo()
        idx = _unfolding_indices(coo.col, n, degree)
        sampled = row_kron([V[i] for i in idx]) * coo.data[:, None]
        gather = sp.csr_matrix(
            (np.ones(coo.nnz), (coo.row, np.arange(coo.nnz))), shape=(unfolding.shape[0], coo.nnz)
        )
        return W.T @ (gather @ sampled)

    tensor = (W.T @ np.asarray(unfolding)).reshape((W.shape[1],) + (n,) * degree)
    for _ in range(degree):
        tensor = np.tensordot(tensor, V, axes=([1], [0]))
    return tensor.reshape(W.shape[1], -1)


@dataclass(frozen=True)
class NonlinearOperator:
    """Degree-``degree`` polynomial nonlinearity ``H_xi x^(xi)``.

    ``terms`` (Hadamard form) is the primary representation; ``unfolding`` is
    the explicit mode-1 unfolding. When both are present they must agree.
    """

    degree: int
    n: int
    terms: Tuple[HadamardTerm, ...] = ()
    unfolding: Optional[Matrix] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms and self.unfolding is None:
            raise SystemDefinitionError(f"H_{self.degree} has neither Hadamard terms nor an unfolding")
        for term in self.terms:
            if term.degree != self.degree or term.n_in != self.n:
                raise SystemDefinitionError(
                    f"Hadamard term of degree {term.degree} on {term.n_in} states "
                    f"does not fit H_{self.degree} on {self.n} states"
                )
        if self.unfolding is not None and self.unfolding.shape[1] != self.n**self.degree:
            raise SystemDefinitionError(
                f"H_{self.degree} unfolding has {self.unfolding.shape[1]} columns, "
                f"expected {self.n}^{self.degree}"
            )

    @property
    def n_out(self) -> int:
        return self.terms[0].n_out if self.terms else self.unfolding.shape[0]

    @property
    def is_dense(self) -> bool:
        if self.terms:
            return any(t.output is not None for t in self.terms)
        return not sp.issparse(self.unfolding)

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.terms:
            return sum(term.apply(x) for term in self.terms)
        if sp.issparse(self.unfolding):
            return contract_vectors(self.unfolding, [x] * self.degree)
        return self.unfolding @ kron_pow(x, self.degree)

    def apply_multilinear(self, vectors: Sequence[np.ndarray]) -> np.ndarray:
        if self.terms:
            return sum(term.apply_multilinear(vectors) for term in self.terms)
        return contract_vectors(self.unfolding, list(reversed(vectors)))

    def adjoint_slot(self, w: np.ndarray, others: Sequence[np.ndarray]) -> np.ndarray:
        """Mode-2 contraction ``(H)_(2) (o_1 kron ... kron o_{xi-1} kron w)``.

        ``w`` contracts the output mode and the free mode is the rightmost
        Kronecker slot of the input.
        """

        if self.terms:
            return sum(term.adjoint_slot(w, others) for term in self.terms)
        dims = (self.n_out,) + (self.n,) * self.degree
        mode2 = mode2_from_mode1(ModeUnfolding(self.unfolding, dims, mode=1))
        return contract_vectors(mode2, [w] + list(reversed(others)))

    def jacobian(self, x: np.ndarray) -> Matrix:
        if self.terms:
            return reduce(_add, [term.jacobian(x) for term in self.terms])
        return unfolding_jacobian(self.unfolding, x, self.degree)

    def explicit(self, cap: Optional[int] = None) -> Matrix:
        if self.unfolding is not None:
            return self.unfolding
        return reduce(_add, [term.explicit(cap) for term in self.terms])

    def project(self, V: np.ndarray, W: np.ndarray) -> np.ndarray:
        if self.terms:
            return sum(term.project(V, W) for term in self.terms)
        return project_unfolding(self.unfolding, V, W, self.degree)

    def check_consistency(self, samples: int = 3, tol: float = 1e-12, seed: int = 0) -> None:
        """Compare both storages on random vectors when both exist."""

        if not self.terms or self.unfolding is None:
            return
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            x = rng.standard_normal(self.n)
            via_terms = sum(term.apply(x) for term in self.terms)
            if sp.issparse(self.unfolding):
                via_unfolding = contract_vectors(self.unfolding, [x] * self.degree)
            else:
                via_unfolding = self.unfolding @ kron_pow(x, self.degree)
            scale = max(np.linalg.norm(via_terms), 1.0)
            if np.linalg.norm(via_terms - via_unfolding) > tol * scale:
                raise SystemDefinitionError(
                    f"Hadamard and unfolding storages of H_{self.degree} disagree"
                )

    @classmethod
    def combine(cls, weighted: Iterable[Tuple[float, "NonlinearOperator"]]) -> "NonlinearOperator":
        """Weighted sum of operators of one degree."""

        items = [(alpha, op) for alpha, op in weighted]
        first = items[0][1]
        if all(op.terms for _, op in items):
            terms = tuple(t.scaled(alpha) for alpha, op in items for t in op.terms)
            return cls(degree=first.degree, n=first.n, terms=terms)
        unfolding = reduce(_add, [alpha * op.explicit() for alpha, op in items])
        return cls(degree=first.degree, n=first.n, unfolding=unfolding)


@dataclass(frozen=True)
class BilinearOperator:
    """``N_eta (u kron x^(eta))`` stored as an n x (m * n^eta) matrix, input mode leftmost."""

    degree: int
    n: int
    m: int
    matrix: Matrix

    def __post_init__(self) -> None:
        expected = (self.n, self.m * self.n**self.degree)
        if self.matrix.shape != expected:
            raise SystemDefinitionError(
                f"N_{self.degree} has shape {self.matrix.shape}, expected {expected}"
            )

    @property
    def width(self) -> int:
        return self.n**self.degree

    def input_slice(self, j: int) -> Matrix:
        """Per-input block ``N^(j)`` of shape n x n^eta."""

        block = self.matrix[:, j * self.width : (j + 1) * self.width]
        return block.tocsr() if sp.issparse(block) else block

    def slice_operator(self, j: int) -> NonlinearOperator:
        return NonlinearOperator(degree=self.degree, n=self.n, unfolding=self.input_slice(j))

    def apply(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        if self.degree == 1:
            return self.matrix @ np.kron(u, x)
        total = np.zeros(self.matrix.shape[0], dtype=np.result_type(x, u))
        for j, weight in enumerate(u):
            if weight != 0:
                total = total + weight * contract_vectors(self.input_slice(j), [x] * self.degree)
        return total

    def jacobian(self, x: np.ndarray, u: np.ndarray) -> Matrix:
        total: Optional[Matrix] = None
        for j, weight in enumerate(u):
            block = self.input_slice(j)
            part = block if self.degree == 1 else unfolding_jacobian(block, x, self.degree)
            part = weight * part
            total = part if total is None else _add(total, part)
        return total

    def project(self, V: np.ndarray, W: np.ndarray) -> np.ndarray:
        blocks = [project_unfolding(self.input_slice(j), V, W, self.degree) for j in range(self.m)]
        return np.hstack(blocks)

    def scaled(self, alpha: float) -> "BilinearOperator":
        return replace(self, matrix=alpha * self.matrix)


@dataclass(frozen=True)
class PolynomialSystem:
    """Full-order (sparse) or reduced (dense) polynomial system."""

    E: Matrix
    A: Matrix
    B: Matrix
    C: Matrix
    H: Dict[int, NonlinearOperator] = field(default_factory=dict)
    N: Dict[int, BilinearOperator] = field(default_factory=dict)
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.E.shape != (n, n):
            raise SystemDefinitionError(f"E {self.E.shape} and A {self.A.shape} must be {n}x{n}")
        if self.B.ndim != 2 or self.B.shape[0] != n:
            raise SystemDefinitionError(f"B must have {n} rows, got shape {self.B.shape}")
        if self.C.ndim != 2 or self.C.shape[1] != n:
            raise SystemDefinitionError(f"C must have {n} columns, got shape {self.C.shape}")
        for degree, op in self.H.items():
            if degree < 2 or op.degree != degree or op.n != n or op.n_out != n:
                raise SystemDefinitionError(f"H_{degree} does not fit a system with n={n}")
        for degree, op in self.N.items():
            if degree < 1 or op.degree != degree or op.n != n or op.m != self.B.shape[1]:
                raise SystemDefinitionError(f"N_{degree} does not fit a system with n={n}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]

    @property
    def d(self) -> int:
        return max([1, *self.H.keys(), *self.N.keys()])

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.A)

    def validate(self) -> "PolynomialSystem":
        """Check E by factorization and both H storages on random vectors."""

        try:
            factorize(self.E)
        except FactorizationError as exc:
            raise SingularSystemError(f"E is not invertible: {exc}") from exc
        for op in self.H.values():
            op.check_consistency()
        return self


def _check_state(sys: PolynomialSystem, x: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x).ravel()
    u = np.atleast_1d(np.asarray(u)).ravel()
    if len(x) != sys.n or len(u) != sys.m:
        raise SystemDefinitionError(
            f"state/input lengths ({len(x)}, {len(u)}) do not match (n={sys.n}, m={sys.m})"
        )
    return x, u


def rhs(sys: PolynomialSystem, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Right side of ``E x' = ...`` (not ``x'`` itself)."""

    x, u = _check_state(sys, x, u)
    value = sys.A @ x + sys.B @ u
    for op in sys.H.values():
        value = value + op.apply(x)
    for op in sys.N.values():
        value = value + op.apply(x, u)
    return np.asarray(value).ravel()


def jacobian(sys: PolynomialSystem, x: np.ndarray, u: np.ndarray) -> Matrix:
    """Analytic derivative of :func:`rhs` with respect to the state."""

    x, u = _check_state(sys, x, u)
    total: Matrix = sp.csr_matrix(sys.A) if sp.issparse(sys.A) else np.array(sys.A, dtype=float)
    for op in sys.H.values():
        total = _add(total, op.jacobian(x))
    for op in sys.N.values():
        total = _add(total, op.jacobian(x, u))
    return total


def explicit_unfolding(term: HadamardTerm, cap: Optional[int] = None) -> sp.csr_matrix:
    """Sparse mode-1 unfolding of a Hadamard term (small n only)."""

    try:
        return term.explicit(cap)
    except KroneckerError as exc:
        raise SystemDefinitionError(str(exc)) from exc


def with_nonlinear(sys: PolynomialSystem, replacements: Dict[int, NonlinearOperator]) -> PolynomialSystem:
    """Copy of ``sys`` with some nonlinear operators swapped."""

    return replace(sys, H={**sys.H, **replacements})
