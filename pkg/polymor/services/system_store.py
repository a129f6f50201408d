"""On-disk storage of systems: Matrix Market files plus a key:value manifest.

A system directory holds ``manifest.txt`` and one ``.mtx`` file per stored
matrix. Sparse matrices use the coordinate format, dense (reduced) matrices
the array format. Non-parametric systems are stored as families with a
single constant term each, so one reader serves both kinds.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import scipy.io
import scipy.sparse as sp

from polymor.models.parametric import CONSTANT, AffineParametricSystem, CoefficientFunction, assemble_at_parameter
from polymor.models.system import (
    BilinearOperator,
    HadamardTerm,
    Matrix,
    NonlinearOperator,
    PolynomialSystem,
)

LOGGER = logging.getLogger(__name__)

MANIFEST = "manifest.txt"
AnySystem = Union[PolynomialSystem, AffineParametricSystem]


class SystemStoreError(RuntimeError):
    """Raised when a system directory cannot be written or read."""


def save_matrix(path: Path, matrix: Matrix) -> None:
    if sp.issparse(matrix):
        scipy.io.mmwrite(str(path), sp.coo_matrix(matrix), precision=17)
    else:
        scipy.io.mmwrite(str(path), np.atleast_2d(np.asarray(matrix)), precision=17)


def load_matrix(path: Path) -> Matrix:
    try:
        data = scipy.io.mmread(str(path))
    except (OSError, ValueError) as exc:
        raise SystemStoreError(f"cannot read matrix {path}: {exc}") from exc
    if sp.issparse(data):
        return sp.csr_matrix(data)
    return np.asarray(data)


class _ManifestWriter:
    def __init__(self, directory: Path) -> None:
        self.directory = directory
        self.lines: List[str] = []

    def put(self, key: str, value) -> None:
        self.lines.append(f"{key}: {value}")

    def matrix(self, key: str, name: str, matrix: Matrix) -> None:
        save_matrix(self.directory / name, matrix)
        self.put(key, name)

    def write(self) -> None:
        (self.directory / MANIFEST).write_text("\n".join(self.lines) + "\n", encoding="utf-8")


def _family_terms(system: AnySystem, label: str):
    if isinstance(system, AffineParametricSystem):
        return getattr(system, label)
    return ((CONSTANT, getattr(system, label)),)


def _nonlinear_terms(system: AnySystem) -> Dict[int, Tuple[Tuple[CoefficientFunction, NonlinearOperator], ...]]:
    if isinstance(system, AffineParametricSystem):
        return system.H
    return {degree: ((CONSTANT, op),) for degree, op in system.H.items()}


def _bilinear_terms(system: AnySystem):
    if isinstance(system, AffineParametricSystem):
        return system.N
    return {degree: ((CONSTANT, op),) for degree, op in system.N.items()}


def save_system(system: AnySystem, directory: Path) -> Path:
    """Write ``system`` into ``directory`` (created if needed)."""

    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SystemStoreError(f"cannot create {directory}: {exc}") from exc

    parametric = isinstance(system, AffineParametricSystem)
    out = _ManifestWriter(directory)
    out.put("kind", "affine-parametric" if parametric else "polynomial")
    for key in ("n", "m", "q", "d"):
        out.put(key, getattr(system, key))
    if parametric and system.parameter_box:
        out.put("parameter_box", "; ".join(f"{lo!r}, {hi!r}" for lo, hi in system.parameter_box))

    for label in ("E", "A", "B", "C"):
        terms = _family_terms(system, label)
        out.put(f"{label}.terms", len(terms))
        for i, (alpha, matrix) in enumerate(terms):
            out.put(f"{label}.{i}.coefficient", alpha.tag)
            out.matrix(f"{label}.{i}.file", f"{label}_{i}.mtx", matrix)

    nonlinear = _nonlinear_terms(system)
    out.put("H.degrees", ",".join(str(k) for k in sorted(nonlinear)))
    for degree in sorted(nonlinear):
        terms = nonlinear[degree]
        out.put(f"H{degree}.terms", len(terms))
        for i, (alpha, op) in enumerate(terms):
            prefix = f"H{degree}.{i}"
            storage = "both" if op.terms and op.unfolding is not None else (
                "hadamard" if op.terms else "explicit"
            )
            out.put(f"{prefix}.coefficient", alpha.tag)
            out.put(f"{prefix}.storage", storage)
            out.put(f"{prefix}.hadamard", len(op.terms))
            for j, term in enumerate(op.terms):
                names = []
                for k, factor in enumerate(term.factors):
                    name = f"H{degree}_{i}_{j}_f{k}.mtx"
                    save_matrix(directory / name, factor)
                    names.append(name)
                out.put(f"{prefix}.h{j}.coefficient", repr(float(term.coefficient)))
                out.put(f"{prefix}.h{j}.factors", ",".join(names))
                if term.output is not None:
                    out.matrix(f"{prefix}.h{j}.output", f"H{degree}_{i}_{j}_out.mtx", term.output)
            if op.unfolding is not None:
                out.matrix(f"{prefix}.unfolding", f"H{degree}_{i}.mtx", op.unfolding)

    bilinear = _bilinear_terms(system)
    out.put("N.degrees", ",".join(str(k) for k in sorted(bilinear)))
    for degree in sorted(bilinear):
        terms = bilinear[degree]
        out.put(f"N{degree}.terms", len(terms))
        for i, (alpha, op) in enumerate(terms):
            out.put(f"N{degree}.{i}.coefficient", alpha.tag)
            out.matrix(f"N{degree}.{i}.file", f"N{degree}_{i}.mtx", op.matrix)

    for key, value in sorted(system.metadata.items()):
        out.put(f"meta.{key}", value)
    out.write()
    LOGGER.info("Saved %s system (n=%d) to %s", "parametric" if parametric else "polynomial", system.n, directory)
    return directory


def read_manifest(directory: Path) -> Dict[str, str]:
    path = Path(directory) / MANIFEST
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SystemStoreError(f"cannot read manifest {path}: {exc}") from exc
    entries: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if ":" not in line:
            raise SystemStoreError(f"{path}:{number}: expected 'key: value'")
        key, value = line.split(":", 1)
        entries[key.strip()] = value.strip()
    return entries


def _degrees(value: str) -> List[int]:
    return [int(v) for v in value.split(",") if v.strip()]


def load_system(directory: Path) -> AnySystem:
    """Read a system written by :func:`save_system` and validate it."""

    directory = Path(directory)
    manifest = read_manifest(directory)

    def get(key: str) -> str:
        try:
            return manifest[key]
        except KeyError as exc:
            raise SystemStoreError(f"manifest in {directory} lacks {key!r}") from exc

    def matrix(key: str) -> Matrix:
        return load_matrix(directory / get(key))

    n = int(get("n"))
    m = int(get("m"))
    families = {}
    for label in ("E", "A", "B", "C"):
        families[label] = tuple(
            (CoefficientFunction.from_tag(get(f"{label}.{i}.coefficient")), matrix(f"{label}.{i}.file"))
            for i in range(int(get(f"{label}.terms")))
        )

    nonlinear = {}
    for degree in _degrees(manifest.get("H.degrees", "")):
        entries = []
        for i in range(int(get(f"H{degree}.terms"))):
            prefix = f"H{degree}.{i}"
            hadamard = []
            for j in range(int(get(f"{prefix}.hadamard"))):
                factors = tuple(load_matrix(directory / name) for name in get(f"{prefix}.h{j}.factors").split(","))
                output = matrix(f"{prefix}.h{j}.output") if f"{prefix}.h{j}.output" in manifest else None
                hadamard.append(HadamardTerm(float(get(f"{prefix}.h{j}.coefficient")), factors, output))
            unfolding = matrix(f"{prefix}.unfolding") if f"{prefix}.unfolding" in manifest else None
            op = NonlinearOperator(degree=degree, n=n, terms=tuple(hadamard), unfolding=unfolding)
            entries.append((CoefficientFunction.from_tag(get(f"{prefix}.coefficient")), op))
        nonlinear[degree] = tuple(entries)

    bilinear = {}
    for degree in _degrees(manifest.get("N.degrees", "")):
        bilinear[degree] = tuple(
            (
                CoefficientFunction.from_tag(get(f"N{degree}.{i}.coefficient")),
                BilinearOperator(degree=degree, n=n, m=m, matrix=matrix(f"N{degree}.{i}.file")),
            )
            for i in range(int(get(f"N{degree}.terms")))
        )

    metadata = {key[len("meta."):]: value for key, value in manifest.items() if key.startswith("meta.")}
    if get("kind") == "affine-parametric":
        box = tuple(
            tuple(float(v) for v in bounds.split(","))
            for bounds in manifest.get("parameter_box", "").split(";")
            if bounds.strip()
        )
        family = AffineParametricSystem(
            E=families["E"],
            A=families["A"],
            B=families["B"],
            C=families["C"],
            H=nonlinear,
            N=bilinear,
            parameter_box=box,
            metadata=metadata,
        )
        # E is checked at the box centre
        centre = [(lo + hi) / 2 for lo, hi in box]
        assemble_at_parameter(family, centre).validate()
        return family

    system = PolynomialSystem(
        E=families["E"][0][1],
        A=families["A"][0][1],
        B=families["B"][0][1],
        C=families["C"][0][1],
        H={degree: terms[0][1] for degree, terms in nonlinear.items()},
        N={degree: terms[0][1] for degree, terms in bilinear.items()},
        metadata=metadata,
    )
    return system.validate()
