"""Kronecker, row-wise Kronecker and tensor matricization primitives.

Ordering convention used throughout the package: in a Kronecker product the
rightmost factor is the lowest index and varies fastest. For the mode-1
unfolding of an N-way tensor the column index of entry (i_1, ..., i_N) is
``i_2 + n_2 * (i_3 + n_3 * (...))`` (0-based), so that

    X_(1) @ (a_N kron ... kron a_2)

contracts mode k with a_k. Mode-2 unfoldings order their columns with i_1
fastest, then i_3, ..., i_N.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

Matrix = Union[np.ndarray, sp.spmatrix]


class KroneckerError(ValueError):
    """Raised when Kronecker or unfolding operands have inconsistent shapes."""


def kron_pow(v: np.ndarray, xi: int) -> np.ndarray:
    """Return ``v kron v kron ... kron v`` with ``xi`` factors."""

    if xi < 1:
        raise KroneckerError(f"Kronecker power degree must be >= 1, got {xi}")
    vec = np.asarray(v).ravel()
    return reduce(np.kron, [vec] * xi)


def _sparse_row_kron(factors: Sequence[sp.spmatrix]) -> sp.csr_matrix:
    current = factors[0].tocoo()
    rows, cols, vals = current.row, current.col, current.data
    width = current.shape[1]
    n = current.shape[0]
    for factor in factors[1:]:
        csr = sp.csr_matrix(factor)
        csr.sum_duplicates()
        counts = csr.indptr[rows + 1] - csr.indptr[rows]
        total = int(counts.sum())
        starts = np.repeat(csr.indptr[rows], counts)
        offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        picked = starts + offsets
        rows = np.repeat(rows, counts)
        cols = np.repeat(cols, counts) * csr.shape[1] + csr.indices[picked]
        vals = np.repeat(vals, counts) * csr.data[picked]
        width *= csr.shape[1]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, width))


def row_kron(factors: Sequence[Matrix]) -> Matrix:
    """Face-splitting product: row ``i`` is ``F_1[i] kron ... kron F_xi[i]``.

    Satisfies ``row_kron(F) @ (p_1 kron ... kron p_xi) == (F_1 p_1) * ... * (F_xi p_xi)``.
    A single factor is returned unchanged. The result is sparse when every
    factor is sparse and dense otherwise.
    """

    if not factors:
        raise KroneckerError("row_kron needs at least one factor")
    n = factors[0].shape[0]
    for factor in factors:
        if factor.ndim != 2 or factor.shape[0] != n:
            raise KroneckerError(
                f"row_kron factors must share the row count {n}, got shape {factor.shape}"
            )
    if len(factors) == 1:
        return factors[0]
    if all(sp.issparse(f) for f in factors):
        return _sparse_row_kron(factors)

    result = _dense(factors[0])
    for factor in factors[1:]:
        dense = _dense(factor)
        result = (result[:, :, None] * dense[:, None, :]).reshape(n, -1)
    return result


def _dense(matrix: Matrix) -> np.ndarray:
    return matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)


@dataclass(frozen=True)
class ModeUnfolding:
    """Mode-``mode`` matricization of a tensor with sizes ``tensor_dims``."""

    data: Matrix
    tensor_dims: Tuple[int, ...]
    mode: int = 1

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.tensor_dims)
        object.__setattr__(self, "tensor_dims", dims)
        if not 1 <= self.mode <= len(dims):
            raise KroneckerError(f"mode {self.mode} outside tensor of order {len(dims)}")
        expected_cols = int(np.prod([d for k, d in enumerate(dims) if k != self.mode - 1]))
        if self.data.shape != (dims[self.mode - 1], expected_cols):
            raise KroneckerError(
                f"unfolding shape {self.data.shape} inconsistent with dims {dims} "
                f"for mode {self.mode}"
            )

    @property
    def remaining_dims(self) -> Tuple[int, ...]:
        """Sizes of the column modes, fastest first."""

        return tuple(d for k, d in enumerate(self.tensor_dims) if k != self.mode - 1)


@lru_cache(maxsize=64)
def _swap_axes(order: int) -> Tuple[int, ...]:
    # C-order tensor view of a mode-1 unfolding is (n1, nN, ..., n3, n2); the
    # swap exchanges the first and last axes.
    axes = list(range(order))
    axes[0], axes[-1] = axes[-1], axes[0]
    return tuple(axes)


def _swap_first_modes(data: Matrix, row_dim: int, fast_dim: int, dims: Tuple[int, ...]) -> Matrix:
    if sp.issparse(data):
        coo = data.tocoo()
        new_rows = coo.col % fast_dim
        rest = coo.col // fast_dim
        new_cols = coo.row + row_dim * rest
        return sp.csr_matrix(
            (coo.data, (new_rows, new_cols)),
            shape=(fast_dim, data.shape[1] // fast_dim * row_dim),
        )
    slow = tuple(reversed(dims[2:]))
    tensor = np.asarray(data).reshape((row_dim,) + slow + (fast_dim,))
    swapped = tensor.transpose(_swap_axes(tensor.ndim))
    return np.ascontiguousarray(swapped).reshape(fast_dim, -1)


def mode2_from_mode1(unfolding: ModeUnfolding) -> ModeUnfolding:
    """Permute a mode-1 unfolding into the mode-2 unfolding of the same tensor."""

    if unfolding.mode != 1:
        raise KroneckerError(f"expected a mode-1 unfolding, got mode {unfolding.mode}")
    dims = unfolding.tensor_dims
    if len(dims) < 2:
        raise KroneckerError("mode-2 unfolding needs a tensor of order >= 2")
    data = _swap_first_modes(unfolding.data, dims[0], dims[1], dims)
    return ModeUnfolding(data=data, tensor_dims=dims, mode=2)


def mode1_from_mode2(unfolding: ModeUnfolding) -> ModeUnfolding:
    """Inverse permutation of :func:`mode2_from_mode1`."""

    if unfolding.mode != 2:
        raise KroneckerError(f"expected a mode-2 unfolding, got mode {unfolding.mode}")
    dims = unfolding.tensor_dims
    swapped_dims = (dims[1], dims[0]) + dims[2:]
    data = _swap_first_modes(unfolding.data, dims[1], dims[0], swapped_dims)
    return ModeUnfolding(data=data, tensor_dims=dims, mode=1)


def contract_vectors(unfolding: Union[ModeUnfolding, Matrix], vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Contract every column mode of an unfolding with one vector each.

    ``vectors`` follow the column modes in increasing mode order, i.e. fastest
    first, so for a mode-1 unfolding the result is ``M @ (a_N kron ... kron a_2)``.
    Plain matrices are treated as mode-1 unfoldings of cubical tensors.
    """

    if isinstance(unfolding, ModeUnfolding):
        data = unfolding.data
        dims = unfolding.remaining_dims
    else:
        data = unfolding
        dims = tuple(len(np.ravel(v)) for v in vectors)
        if int(np.prod(dims)) != data.shape[1]:
            raise KroneckerError(
                f"vector lengths {dims} do not match {data.shape[1]} unfolding columns"
            )
    vecs = [np.asarray(v).ravel() for v in vectors]
    if len(vecs) != len(dims) or any(len(v) != d for v, d in zip(vecs, dims)):
        raise KroneckerError(
            f"vector lengths {[len(v) for v in vecs]} do not match modes {list(dims)}"
        )
    dtype = np.result_type(data.dtype, *[v.dtype for v in vecs])

    if sp.issparse(data):
        coo = data.tocoo()
        weights = coo.data.astype(dtype, copy=True)
        cols = coo.col.astype(np.int64, copy=True)
        for vec in vecs:
            size = len(vec)
            weights *= vec[cols % size]
            cols //= size
        summed = sp.coo_matrix(
            (weights, (coo.row, np.zeros_like(coo.row))), shape=(data.shape[0], 1)
        )
        return summed.toarray().ravel()

    tensor = np.asarray(data).reshape((data.shape[0],) + tuple(reversed(dims)))
    for vec in vecs:
        tensor = tensor @ vec
    return np.asarray(tensor, dtype=dtype).ravel()
