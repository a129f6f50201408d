"""Generalized transfer functions of polynomial systems.

With ``Phi(s) = (sE - A)^-1``:

    F_L(s1)                = C Phi(s1) B
    F_H(s1, ..., s_{xi+1}) = C Phi(s_{xi+1}) H_xi (Phi(s_xi) B kron ... kron Phi(s1) B)
    F_N(s1, ..., s_{eta+1}) = C Phi(s_{eta+1}) N_eta (I_m kron Phi(s_eta) B kron ... kron Phi(s1) B)

``s1`` is always the rightmost Kronecker factor and the last point the
output-side solve.
"""

from __future__ import annotations

import itertools
import logging
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import scipy.sparse as sp

from polymor.config import DEFAULT_CONFIG
from polymor.core.linalg import Factorization, FactorizationError, factorize
from polymor.models.parametric import AffineParametricSystem, assemble_at_parameter
from polymor.models.system import PolynomialSystem

LOGGER = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class SingularPencilError(RuntimeError):
    """Raised when ``sE - A`` cannot be factorized at a frequency point."""

    def __init__(self, s: complex, parameter: Optional[Sequence[float]] = None, detail: str = "") -> None:
        self.s = s
        self.parameter = None if parameter is None else tuple(parameter)
        where = f"s={s}" if parameter is None else f"s={s}, p={self.parameter}"
        message = f"pencil sE - A is singular at {where}"
        super().__init__(f"{message}: {detail}" if detail else message)


class MissingTermError(KeyError):
    """Raised when a transfer function refers to an absent nonlinear term."""


def _dense(matrix) -> np.ndarray:
    return matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)


class ResolventSolver:
    """Applies ``Phi(s)`` and ``Phi(s)^T`` with an LRU cache of LU factors.

    The cache is the only shared state and is guarded by a lock, so one solver
    may serve several worker threads.
    """

    def __init__(
        self,
        system: PolynomialSystem,
        cache_size: Optional[int] = None,
        parameter: Optional[Sequence[float]] = None,
    ) -> None:
        self.system = system
        self.cache_size = cache_size or DEFAULT_CONFIG.transfer.cache_size
        self.parameter = parameter
        self._cache: "OrderedDict[complex, Factorization]" = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def factor(self, s: complex) -> Factorization:
        key = complex(s)
        with self._lock:
            cached = self._cache.get(key)
            if cached is not None:
                self._cache.move_to_end(key)
                self.hits += 1
                return cached
            self.misses += 1
        shift = key.real if key.imag == 0 else key
        try:
            factors = factorize(shift * self.system.E - self.system.A)
        except FactorizationError as exc:
            raise SingularPencilError(key, self.parameter, str(exc)) from exc
        with self._lock:
            self._cache[key] = factors
            self._cache.move_to_end(key)
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return factors

    def solve(self, s: complex, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        result = self.factor(s).solve(np.asarray(rhs), transpose=transpose)
        if not np.all(np.isfinite(result)):
            raise SingularPencilError(complex(s), self.parameter, "solve produced non-finite values")
        return result


def phi_solve(
    sys: PolynomialSystem,
    s: complex,
    rhs: np.ndarray,
    solver: Optional[ResolventSolver] = None,
) -> np.ndarray:
    """``(sE - A)^-1 rhs``."""

    solver = solver or ResolventSolver(sys)
    return solver.solve(s, rhs)


def map_points(func: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> List[R]:
    """Apply ``func`` to independent points, in a thread pool when ``workers > 1``."""

    workers = workers or DEFAULT_CONFIG.transfer.workers
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _input_solves(sys: PolynomialSystem, points: Sequence[complex], solver: ResolventSolver) -> List[np.ndarray]:
    B = _dense(sys.B)
    return [solver.solve(s, B) for s in points]


def _kron_columns(solves: List[np.ndarray], m: int) -> Iterable[List[np.ndarray]]:
    # Column order of Phi(s_k)B kron ... kron Phi(s_1)B: the last index runs fastest.
    degree = len(solves)
    for combo in itertools.product(range(m), repeat=degree):
        yield [solves[degree - 1 - pos][:, combo[pos]] for pos in range(degree)]


def eval_FL(sys: PolynomialSystem, s1: complex, solver: Optional[ResolventSolver] = None) -> np.ndarray:
    """Linear transfer function ``C Phi(s1) B`` (q x m)."""

    solver = solver or ResolventSolver(sys)
    return np.asarray(sys.C @ solver.solve(s1, _dense(sys.B)))


def eval_FH(
    sys: PolynomialSystem,
    xi: int,
    s: Sequence[complex],
    solver: Optional[ResolventSolver] = None,
) -> np.ndarray:
    """Degree-``xi`` transfer function (q x m^xi)."""

    if xi not in sys.H:
        raise MissingTermError(f"system has no H_{xi}")
    if len(s) != xi + 1:
        raise ValueError(f"F_H of degree {xi} needs {xi + 1} points, got {len(s)}")
    solver = solver or ResolventSolver(sys)
    op = sys.H[xi]
    solves = _input_solves(sys, s[:xi], solver)
    columns = [op.apply_multilinear(vectors) for vectors in _kron_columns(solves, sys.m)]
    inner = np.column_stack(columns)
    return np.asarray(sys.C @ solver.solve(s[xi], inner))


def eval_FN(
    sys: PolynomialSystem,
    eta: int,
    s: Sequence[complex],
    solver: Optional[ResolventSolver] = None,
) -> np.ndarray:
    """Bilinear transfer function of degree ``eta`` (q x m^(eta+1))."""

    if eta not in sys.N:
        raise MissingTermError(f"system has no N_{eta}")
    if len(s) != eta + 1:
        raise ValueError(f"F_N of degree {eta} needs {eta + 1} points, got {len(s)}")
    solver = solver or ResolventSolver(sys)
    op = sys.N[eta]
    solves = _input_solves(sys, s[:eta], solver)
    columns = []
    for j in range(sys.m):
        block = op.slice_operator(j)
        columns.extend(block.apply_multilinear(vectors) for vectors in _kron_columns(solves, sys.m))
    inner = np.column_stack(columns)
    return np.asarray(sys.C @ solver.solve(s[eta], inner))


def evaluate(
    sys: PolynomialSystem,
    kind: str,
    degree: int,
    s: Sequence[complex],
    solver: Optional[ResolventSolver] = None,
) -> np.ndarray:
    """Dispatch on ``kind`` in ``{"L", "H", "N"}``."""

    if kind == "L":
        return eval_FL(sys, s[0], solver)
    if kind == "H":
        return eval_FH(sys, degree, s, solver)
    if kind == "N":
        return eval_FN(sys, degree, s, solver)
    raise ValueError(f"unknown transfer function kind: {kind!r}")


class ParametricEvaluator:
    """Frozen systems and their resolvent solvers cached per parameter point."""

    def __init__(self, psys: AffineParametricSystem, cache_size: Optional[int] = None) -> None:
        self.psys = psys
        self.cache_size = cache_size or DEFAULT_CONFIG.transfer.cache_size
        self._solvers: "OrderedDict[Tuple[float, ...], ResolventSolver]" = OrderedDict()
        self._lock = threading.Lock()

    def solver(self, p: Sequence[float]) -> ResolventSolver:
        key = tuple(float(v) for v in np.atleast_1d(p))
        with self._lock:
            cached = self._solvers.get(key)
            if cached is not None:
                self._solvers.move_to_end(key)
                return cached
        frozen = assemble_at_parameter(self.psys, key)
        solver = ResolventSolver(frozen, self.cache_size, parameter=key)
        with self._lock:
            self._solvers[key] = solver
            while len(self._solvers) > self.cache_size:
                self._solvers.popitem(last=False)
        return solver

    def system(self, p: Sequence[float]) -> PolynomialSystem:
        return self.solver(p).system


def eval_parametric(
    psys: AffineParametricSystem,
    kind: str,
    degree: int,
    s: Sequence[complex],
    p: Sequence[float],
    evaluator: Optional[ParametricEvaluator] = None,
) -> np.ndarray:
    """Transfer function of the family frozen at ``p``."""

    evaluator = evaluator or ParametricEvaluator(psys)
    solver = evaluator.solver(p)
    return evaluate(solver.system, kind, degree, s, solver)
