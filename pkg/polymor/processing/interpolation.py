"""Raw projection bases from interpolation data.

For each frequency point the right basis V collects ``Phi(s) B b`` and the
images of the nonlinear terms applied to it; the left basis W collects
``Phi(s)^T C^T c`` and the mode-2 contractions of the nonlinear terms with the
left vector in the output slot. Complex columns are split into real and
imaginary parts, so conjugate-closed point sets give real bases.
"""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from polymor.config import DEFAULT_CONFIG, InterpolationConfig
from polymor.models.parametric import AffineParametricSystem
from polymor.models.system import PolynomialSystem
from polymor.transfer.evaluation import (
    ParametricEvaluator,
    ResolventSolver,
    SingularPencilError,
    eval_FL,
    map_points,
)

LOGGER = logging.getLogger(__name__)

MODES = ("siso-general", "tangential", "parametric-tangential")


class InterpolationError(ValueError):
    """Raised for inconsistent interpolation data."""


class EmptyBasisError(RuntimeError):
    """Raised when a basis has no numerically nonzero column."""


@dataclass(frozen=True)
class InterpolationSet:
    """Frequency points with optional left points, directions and parameters."""

    sigma: np.ndarray
    mu: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None
    mode: str = "tangential"

    def __post_init__(self) -> None:
        object.__setattr__(self, "sigma", np.atleast_1d(np.asarray(self.sigma, dtype=complex)))
        if self.mu is not None:
            object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=complex)))
        for key in ("b", "c"):
            value = getattr(self, key)
            if value is not None:
                object.__setattr__(self, key, np.atleast_2d(np.asarray(value, dtype=complex)))
        if self.p is not None:
            p = np.asarray(self.p, dtype=float)
            object.__setattr__(self, "p", p.reshape(len(self.sigma), -1) if p.ndim < 2 else p)
        self.validate()

    def __len__(self) -> int:
        return len(self.sigma)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise InterpolationError(f"unknown interpolation mode {self.mode!r}; expected one of {MODES}")
        k = len(self.sigma)
        if k == 0:
            raise InterpolationError("interpolation set is empty")
        for key in ("b", "c"):
            value = getattr(self, key)
            if value is not None and value.shape[0] != k:
                raise InterpolationError(f"{key} has {value.shape[0]} directions for {k} points")
        if self.mode == "siso-general" and (self.mu is None or len(self.mu) != k):
            raise InterpolationError("siso-general mode needs one left point per right point")
        if self.mode == "parametric-tangential" and (self.p is None or self.p.shape[0] != k):
            raise InterpolationError("parametric mode needs one parameter vector per point")
        _check_closed(self.sigma, "sigma")
        if self.mu is not None:
            _check_closed(self.mu, "mu")

    def directions(self, i: int, m: int, q: int) -> Tuple[np.ndarray, np.ndarray]:
        b = np.ones(m, dtype=complex) if self.b is None else self.b[i]
        c = np.ones(q, dtype=complex) if self.c is None else self.c[i]
        if len(b) != m or len(c) != q:
            raise InterpolationError(f"point {i}: directions of length ({len(b)}, {len(c)}) for m={m}, q={q}")
        if not np.any(b) or not np.any(c):
            raise InterpolationError(f"point {i}: zero tangential direction")
        return b, c


def _check_closed(points: np.ndarray, label: str) -> None:
    for value in points:
        if value.imag != 0 and not np.any(np.isclose(points, np.conj(value), rtol=1e-14, atol=0)):
            raise InterpolationError(f"{label} is not closed under conjugation: missing conj({value})")


@dataclass(frozen=True)
class ColumnRecord:
    """Where one basis column came from."""

    block: str
    point: int
    degree: int
    part: str
    sigma: complex
    parameter: Optional[Tuple[float, ...]] = None
    input_index: Optional[int] = None


@dataclass(frozen=True)
class RawBases:
    """Untrimmed right and left bases with per-column provenance."""

    V: np.ndarray
    W: np.ndarray
    v_records: Tuple[ColumnRecord, ...] = ()
    w_records: Tuple[ColumnRecord, ...] = ()

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.V)) and np.all(np.isfinite(self.W))):
            raise InterpolationError("raw bases contain non-finite entries")
        if self.V.shape[1] != len(self.v_records) or self.W.shape[1] != len(self.w_records):
            raise InterpolationError("provenance does not match the basis column count")

    @property
    def provenance(self) -> Tuple[ColumnRecord, ...]:
        return self.v_records + self.w_records


@dataclass
class _Columns:
    tol: float
    vectors: List[np.ndarray] = field(default_factory=list)
    records: List[ColumnRecord] = field(default_factory=list)

    def add(self, vec: np.ndarray, record: ColumnRecord) -> None:
        vec = np.asarray(vec).ravel()
        scale = np.max(np.abs(vec)) if vec.size else 0.0
        if np.max(np.abs(vec.imag), initial=0.0) <= self.tol * scale:
            self.vectors.append(vec.real.copy())
            self.records.append(replace(record, part="re"))
            return
        self.vectors.append(vec.real.copy())
        self.records.append(replace(record, part="re"))
        self.vectors.append(vec.imag.copy())
        self.records.append(replace(record, part="im"))

    def extend(self, other: "_Columns") -> None:
        self.vectors.extend(other.vectors)
        self.records.extend(other.records)

    def matrix(self, n: int) -> np.ndarray:
        return np.column_stack(self.vectors) if self.vectors else np.zeros((n, 0))


def _dense(matrix) -> np.ndarray:
    return matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)


def _diagonal_columns(
    sys: PolynomialSystem,
    solver: ResolventSolver,
    point: int,
    sigma: complex,
    mu: complex,
    b: np.ndarray,
    c: np.ndarray,
    tol: float,
    parameter: Optional[Tuple[float, ...]] = None,
) -> Tuple[_Columns, _Columns]:
    right, left = _Columns(tol), _Columns(tol)

    def record(block: str, degree: int, input_index: Optional[int] = None) -> ColumnRecord:
        return ColumnRecord(block, point, degree, "", sigma, parameter, input_index)

    v0 = solver.solve(sigma, sys.B @ b)
    right.add(v0, record("V_L", 1))
    for eta, op in sorted(sys.N.items()):
        images = np.column_stack([op.slice_operator(j).apply_multilinear([v0] * eta) for j in range(sys.m)])
        solved = solver.solve(sigma, images)
        for j in range(sys.m):
            right.add(solved[:, j], record("V_N", eta, j))
    for xi, op in sorted(sys.H.items()):
        right.add(solver.solve(sigma, op.apply_multilinear([v0] * xi)), record("V_H", xi))

    w0 = solver.solve(mu, sys.C.T @ c, transpose=True)
    left.add(w0, replace(record("W_L", 1), sigma=mu))
    for eta, op in sorted(sys.N.items()):
        images = np.column_stack(
            [op.slice_operator(j).adjoint_slot(w0, [v0] * (eta - 1)) for j in range(sys.m)]
        )
        solved = solver.solve(sigma, images, transpose=True)
        for j in range(sys.m):
            left.add(solved[:, j], record("W_N", eta, j))
    for xi, op in sorted(sys.H.items()):
        left.add(solver.solve(sigma, op.adjoint_slot(w0, [v0] * (xi - 1)), transpose=True), record("W_H", xi))
    return right, left


def _points_to_visit(points: np.ndarray) -> List[int]:
    # One representative per conjugate pair; realification covers the partner.
    return [i for i, s in enumerate(points) if s.imag >= 0]


def _merge(n: int, blocks: Sequence[Tuple[_Columns, _Columns]], tol: float) -> RawBases:
    right, left = _Columns(tol), _Columns(tol)
    for r_cols, l_cols in blocks:
        right.extend(r_cols)
        left.extend(l_cols)
    return RawBases(
        V=right.matrix(n),
        W=left.matrix(n),
        v_records=tuple(right.records),
        w_records=tuple(left.records),
    )


def _point_error(index: int, exc: SingularPencilError) -> InterpolationError:
    return InterpolationError(f"interpolation point {index}: {exc}")


def build_bases_tangential(
    sys: PolynomialSystem,
    iset: InterpolationSet,
    solver: Optional[ResolventSolver] = None,
    config: Optional[InterpolationConfig] = None,
    workers: Optional[int] = None,
) -> RawBases:
    """Tangential bases with all frequencies of a block equal to the point."""

    if iset.mode != "tangential":
        raise InterpolationError(f"expected a tangential set, got {iset.mode!r}")
    cfg = config or DEFAULT_CONFIG.interpolation
    solver = solver or ResolventSolver(sys)

    def build(i: int) -> Tuple[_Columns, _Columns]:
        b, c = iset.directions(i, sys.m, sys.q)
        try:
            return _diagonal_columns(sys, solver, i, iset.sigma[i], iset.sigma[i], b, c, cfg.realify_tol)
        except SingularPencilError as exc:
            raise _point_error(i, exc) from exc

    bases = _merge(sys.n, map_points(build, _points_to_visit(iset.sigma), workers), cfg.realify_tol)
    LOGGER.info("Tangential bases: V %s, W %s from %d points", bases.V.shape, bases.W.shape, len(iset))
    return bases


def _full_tuple_columns(
    sys: PolynomialSystem,
    solver: ResolventSolver,
    iset: InterpolationSet,
    tol: float,
) -> Tuple[_Columns, _Columns]:
    right, left = _Columns(tol), _Columns(tol)
    B = _dense(sys.B).ravel()
    Ct = _dense(sys.C).ravel()
    sigma = list(iset.sigma)
    inputs = {s: solver.solve(s, B) for s in sigma}
    outputs = {s: solver.solve(s, Ct, transpose=True) for s in iset.mu}
    count = 0

    def record(block: str, degree: int, point: int, s: complex) -> ColumnRecord:
        return ColumnRecord(block, point, degree, "", s)

    for i, s in enumerate(sigma):
        right.add(inputs[s], record("V_L", 1, i, s))
    for i, s in enumerate(iset.mu):
        left.add(outputs[s], record("W_L", 1, i, s))
    blocks = [("H", xi, op) for xi, op in sorted(sys.H.items())]
    blocks += [("N", eta, op.slice_operator(0)) for eta, op in sorted(sys.N.items())]
    for kind, degree, op in blocks:
        for lam in itertools.product(range(len(sigma)), repeat=degree + 1):
            # lam[k] is the index of lambda_{k+1}
            vectors = [inputs[sigma[lam[k]]] for k in range(degree - 1, -1, -1)]
            image = op.apply_multilinear(vectors)
            right.add(solver.solve(sigma[lam[degree]], image), record(f"V_{kind}", degree, lam[degree], sigma[lam[degree]]))
            count += 1
        for lam in itertools.product(range(len(sigma)), repeat=degree):
            others = [inputs[sigma[lam[k]]] for k in range(degree - 1, 0, -1)]
            for j, beta in enumerate(iset.mu):
                image = op.adjoint_slot(outputs[beta], others)
                left.add(solver.solve(sigma[lam[0]], image, transpose=True), record(f"W_{kind}", degree, j, beta))
                count += 1
    LOGGER.warning("Full tuple enumeration generated %d nonlinear columns", count)
    return right, left


def build_bases_siso_general(
    sys: PolynomialSystem,
    iset: InterpolationSet,
    solver: Optional[ResolventSolver] = None,
    config: Optional[InterpolationConfig] = None,
    workers: Optional[int] = None,
) -> RawBases:
    """SISO bases with distinct right points ``sigma`` and left points ``mu``."""

    if iset.mode != "siso-general":
        raise InterpolationError(f"expected a siso-general set, got {iset.mode!r}")
    if sys.m != 1 or sys.q != 1:
        raise InterpolationError(f"siso-general mode needs m = q = 1, got m={sys.m}, q={sys.q}")
    cfg = config or DEFAULT_CONFIG.interpolation
    solver = solver or ResolventSolver(sys)
    one = np.ones(1, dtype=complex)

    if cfg.full_tuples:
        try:
            bases = _merge(sys.n, [_full_tuple_columns(sys, solver, iset, cfg.realify_tol)], cfg.realify_tol)
        except SingularPencilError as exc:
            raise InterpolationError(str(exc)) from exc
    else:
        def build(i: int) -> Tuple[_Columns, _Columns]:
            try:
                return _diagonal_columns(sys, solver, i, iset.sigma[i], iset.mu[i], one, one, cfg.realify_tol)
            except SingularPencilError as exc:
                raise _point_error(i, exc) from exc

        visit = [i for i in range(len(iset)) if iset.sigma[i].imag >= 0]
        bases = _merge(sys.n, map_points(build, visit, workers), cfg.realify_tol)
    LOGGER.info("SISO bases: V %s, W %s", bases.V.shape, bases.W.shape)
    return bases


def build_bases_parametric(
    psys: AffineParametricSystem,
    iset: InterpolationSet,
    evaluator: Optional[ParametricEvaluator] = None,
    config: Optional[InterpolationConfig] = None,
    workers: Optional[int] = None,
) -> RawBases:
    """Tangential bases with the family frozen at each point's parameter."""

    if iset.mode != "parametric-tangential":
        raise InterpolationError(f"expected a parametric-tangential set, got {iset.mode!r}")
    cfg = config or DEFAULT_CONFIG.interpolation
    evaluator = evaluator or ParametricEvaluator(psys)

    def build(i: int) -> Tuple[_Columns, _Columns]:
        parameter = tuple(float(v) for v in iset.p[i])
        solver = evaluator.solver(parameter)
        frozen = solver.system
        b, c = iset.directions(i, frozen.m, frozen.q)
        try:
            return _diagonal_columns(
                frozen, solver, i, iset.sigma[i], iset.sigma[i], b, c, cfg.realify_tol, parameter
            )
        except SingularPencilError as exc:
            raise _point_error(i, exc) from exc

    bases = _merge(psys.n, map_points(build, _points_to_visit(iset.sigma), workers), cfg.realify_tol)
    LOGGER.info("Parametric bases: V %s, W %s from %d points", bases.V.shape, bases.W.shape, len(iset))
    return bases


def build_bases(
    system: Union[PolynomialSystem, AffineParametricSystem],
    iset: InterpolationSet,
    config: Optional[InterpolationConfig] = None,
    workers: Optional[int] = None,
) -> RawBases:
    """Dispatch on the interpolation mode."""

    if iset.mode == "parametric-tangential":
        if not isinstance(system, AffineParametricSystem):
            raise InterpolationError("parametric interpolation needs an affine parametric system")
        return build_bases_parametric(system, iset, config=config, workers=workers)
    if isinstance(system, AffineParametricSystem):
        raise InterpolationError(f"mode {iset.mode!r} needs a non-parametric system")
    if iset.mode == "siso-general":
        return build_bases_siso_general(system, iset, config=config, workers=workers)
    return build_bases_tangential(system, iset, config=config, workers=workers)


def orth_trim(M: np.ndarray, tol: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis of the numerical column space of ``M``."""

    tol = DEFAULT_CONFIG.interpolation.orth_tol if tol is None else tol
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[1] == 0:
        raise EmptyBasisError(f"cannot orthonormalize an empty matrix of shape {M.shape}")
    U, s, _ = sla.svd(M, full_matrices=False)
    if s[0] == 0:
        raise EmptyBasisError("all columns are zero")
    keep = s > tol * s[0]
    return U[:, keep]


def logspace_points(low: float, high: float, count: int) -> np.ndarray:
    """``count`` real frequencies logarithmically spaced in ``[low, high]``."""

    if not 0 < low <= high or count < 1:
        raise InterpolationError(f"invalid frequency range [{low}, {high}] with {count} points")
    return np.logspace(np.log10(low), np.log10(high), count)


def random_parameters(box: Sequence[Tuple[float, float]], count: int, seed: int) -> np.ndarray:
    """Uniform parameter samples in ``box`` from a seeded generator."""

    rng = np.random.default_rng(seed)
    lows = np.array([lo for lo, _ in box], dtype=float)
    highs = np.array([hi for _, hi in box], dtype=float)
    return rng.uniform(lows, highs, size=(count, len(box)))


def default_directions(
    sys: PolynomialSystem, sigma: Sequence[complex], solver: Optional[ResolventSolver] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Leading singular directions of ``F_L`` at each point (ones for SISO)."""

    k = len(sigma)
    if sys.m == 1 and sys.q == 1:
        return np.ones((k, 1), dtype=complex), np.ones((k, 1), dtype=complex)
    solver = solver or ResolventSolver(sys)
    b = np.empty((k, sys.m), dtype=complex)
    c = np.empty((k, sys.q), dtype=complex)
    for i, s in enumerate(sigma):
        U, _, Vh = sla.svd(eval_FL(sys, s, solver))
        b[i] = Vh[0].conj()
        c[i] = U[:, 0].conj()
    return b, c


def tangential_set(
    sys: PolynomialSystem,
    sigma: Sequence[complex],
    b: Optional[np.ndarray] = None,
    c: Optional[np.ndarray] = None,
) -> InterpolationSet:
    """Tangential set with default directions filled in."""

    if b is None or c is None:
        default_b, default_c = default_directions(sys, sigma)
        b = default_b if b is None else b
        c = default_c if c is None else c
    return InterpolationSet(sigma=np.asarray(sigma), b=b, c=c, mode="tangential")


def load_interpolation_csv(path: Path, m: int, q: int, n_params: int = 0) -> InterpolationSet:
    """Read ``sigma_re, sigma_im, p_1.., b_1.., c_1..`` rows; direction columns are optional."""

    try:
        with Path(path).open(newline="", encoding="utf-8") as handle:
            rows = list(csv.DictReader(handle))
    except OSError as exc:
        raise InterpolationError(f"cannot read interpolation points from {path}: {exc}") from exc
    if not rows:
        raise InterpolationError(f"{path} holds no interpolation points")

    def column_block(prefix: str, width: int) -> Optional[np.ndarray]:
        names = [f"{prefix}_{j}" for j in range(1, width + 1)]
        if width == 0 or names[0] not in rows[0]:
            return None
        try:
            return np.array([[float(row[name]) for name in names] for row in rows])
        except (KeyError, ValueError) as exc:
            raise InterpolationError(f"{path}: bad {prefix} columns: {exc}") from exc

    try:
        sigma = np.array([float(row["sigma_re"]) + 1j * float(row.get("sigma_im") or 0.0) for row in rows])
    except (KeyError, ValueError) as exc:
        raise InterpolationError(f"{path}: bad sigma columns: {exc}") from exc
    p = column_block("p", n_params)
    return InterpolationSet(
        sigma=sigma,
        b=column_block("b", m),
        c=column_block("c", q),
        p=p,
        mode="parametric-tangential" if p is not None else "tangential",
    )
