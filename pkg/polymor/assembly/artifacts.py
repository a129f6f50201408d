"""CSV and JSON artifacts written by the command-line runs."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from polymor.hyper.cur import CurHyperModel
from polymor.processing.loewner import LoewnerPencil, ReductionResult
from polymor.services.system_store import SystemStoreError, load_matrix, save_matrix, save_system
from polymor.simulation.compare import ErrorReport
from polymor.simulation.integrator import Trajectory

LOGGER = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _write_table(path: Path, header: Sequence[str], columns: Sequence[np.ndarray]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, table, fmt=FLOAT_FORMAT, delimiter=",", header=",".join(header), comments="")
    return path


def write_trajectory_csv(path: Path, trajectory: Trajectory) -> Path:
    header = ["t"] + [f"y_{j + 1}" for j in range(trajectory.q)]
    return _write_table(path, header, [trajectory.times, *trajectory.outputs])


def write_error_csv(path: Path, report: ErrorReport) -> Path:
    q = report.relative_errors.shape[0]
    header = ["t"] + [f"relerr_{j + 1}" for j in range(q)]
    return _write_table(path, header, [report.times, *report.relative_errors])


def _padded(values: np.ndarray, size: int) -> np.ndarray:
    out = np.full(size, np.nan)
    out[: len(values)] = values
    return out


def write_singular_values_csv(path: Path, pencil: LoewnerPencil) -> Path:
    """``index, sigma_row, sigma_col, relative_row, relative_col`` (1-based index)."""

    s_row, s_col = pencil.singular_values_row, pencil.singular_values_col
    size = max(len(s_row), len(s_col))
    row, col = _padded(s_row, size), _padded(s_col, size)
    return _write_table(
        path,
        ["index", "sigma_row", "sigma_col", "relative_row", "relative_col"],
        [np.arange(1, size + 1), row, col, row / s_row[0], col / s_col[0]],
    )


def write_transfer_csv(path: Path, points: np.ndarray, values: np.ndarray) -> Path:
    """One row per value: the tuple's points, then ``i, j`` (1-based) and the value.

    Rows run over tuples, then output index ``i``, then input-side index ``j``.
    """

    points = np.atleast_2d(points)
    count, q, width = values.shape
    header: List[str] = []
    for k in range(points.shape[1]):
        header += [f"s{k + 1}_re", f"s{k + 1}_im"]
    header += ["i", "j", "value_re", "value_im"]
    tuples = np.repeat(np.arange(count), q * width)
    i, j = np.divmod(np.tile(np.arange(q * width), count), width)
    flat = values.reshape(-1)
    columns: List[np.ndarray] = []
    for k in range(points.shape[1]):
        columns += [points[tuples, k].real, points[tuples, k].imag]
    columns += [i + 1, j + 1, flat.real, flat.imag]
    return _write_table(path, header, columns)


def write_json(path: Path, payload: Dict[str, object]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable), encoding="utf-8")
    return path


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def save_hyper(directory: Path, model: CurHyperModel) -> Path:
    """``rows.csv``, ``cols.csv``, ``psi.mtx`` and ``factor_<t>_<j>.mtx`` per sampled term."""

    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "rows.csv", model.row_idx, fmt="%d")
    np.savetxt(directory / "cols.csv", model.col_idx, fmt="%d")
    save_matrix(directory / "psi.mtx", model.Psi)
    coefficients = []
    for t, (coefficient, factors) in enumerate(model.sampled):
        coefficients.append(coefficient)
        for j, factor in enumerate(factors):
            save_matrix(directory / f"factor_{t}_{j}.mtx", factor)
    np.savetxt(directory / "coefficients.csv", np.asarray(coefficients), fmt=FLOAT_FORMAT)
    (directory / "degree.txt").write_text(f"{model.degree}\n", encoding="utf-8")
    return directory


def load_hyper(directory: Path) -> CurHyperModel:
    try:
        degree = int((directory / "degree.txt").read_text(encoding="utf-8").strip())
        rows = np.atleast_1d(np.loadtxt(directory / "rows.csv", dtype=np.int64))
        cols = np.atleast_1d(np.loadtxt(directory / "cols.csv", dtype=np.int64))
        coefficients = np.atleast_1d(np.loadtxt(directory / "coefficients.csv"))
    except (OSError, ValueError) as exc:
        raise SystemStoreError(f"cannot read CUR model from {directory}: {exc}") from exc
    sampled = tuple(
        (
            float(coefficient),
            tuple(np.atleast_2d(load_matrix(directory / f"factor_{t}_{j}.mtx")) for j in range(degree)),
        )
        for t, coefficient in enumerate(coefficients)
    )
    return CurHyperModel(
        degree=degree,
        row_idx=rows,
        col_idx=cols,
        Psi=np.atleast_2d(load_matrix(directory / "psi.mtx")),
        sampled=sampled,
    )


def load_hyper_models(directory: Path) -> List[CurHyperModel]:
    """Every CUR model stored under ``<reduction>/hyper``."""

    root = directory / "hyper"
    if not root.is_dir():
        return []
    return [load_hyper(path) for path in sorted(root.iterdir()) if path.is_dir()]


def save_reduction(
    result: ReductionResult,
    directory: Path,
    hyper: Iterable[CurHyperModel] = (),
) -> Path:
    """ROM, effective bases, singular values, timings and optional CUR models."""

    directory.mkdir(parents=True, exist_ok=True)
    save_system(result.rom, directory / "rom")
    save_matrix(directory / "V_eff.mtx", result.V_eff)
    save_matrix(directory / "W_eff.mtx", result.W_eff)
    write_singular_values_csv(directory / "singular_values.csv", result.pencil)
    write_json(
        directory / "timings.json",
        {
            "order": result.order,
            "one_sided": result.one_sided,
            "raw_columns": [int(result.raw.V.shape[1]), int(result.raw.W.shape[1])],
            "timings": result.timings,
            "diagnostics": result.diagnostics,
        },
    )
    for model in hyper:
        save_hyper(directory / "hyper" / f"H{model.degree}", model)
    LOGGER.info("Reduction artifacts written to %s", directory)
    return directory


def load_reduction_bases(directory: Path) -> Tuple[np.ndarray, np.ndarray]:
    V = np.atleast_2d(load_matrix(directory / "V_eff.mtx"))
    W = np.atleast_2d(load_matrix(directory / "W_eff.mtx"))
    return V, W
