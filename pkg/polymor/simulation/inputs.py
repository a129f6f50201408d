"""Input signals for time-domain simulation."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

LOGGER = logging.getLogger(__name__)

ScalarSignal = Callable[[float], float]


class InputError(ValueError):
    """Raised for unknown signal tags or malformed input tables."""


def _u1(t: float) -> float:
    return 10.0 * (np.sin(np.pi * t) + 1.0)


def _u2(t: float) -> float:
    return 5.0 * t * np.exp(-t)


def _fhn_current(t: float) -> float:
    return 5e4 * t**3 * np.exp(-t)


BUILTIN_SIGNALS: Dict[str, ScalarSignal] = {
    "u1": _u1,
    "u2": _u2,
    "fhn-i0": _fhn_current,
    "zero": lambda t: 0.0,
}


@dataclass(frozen=True)
class InputSignal:
    """Vector input ``u(t)`` of length ``m``.

    The scalar signal drives every channel except ``constant_channels``,
    which are held at 1 (source terms modelled as a constant input).
    """

    tag: str
    m: int
    signal: ScalarSignal
    constant_channels: Tuple[int, ...] = ()
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.m < 1:
            raise InputError(f"input needs at least one channel, got m={self.m}")
        bad = [j for j in self.constant_channels if not 0 <= j < self.m]
        if bad:
            raise InputError(f"constant channels {bad} are out of range for m={self.m}")

    def __call__(self, t: float) -> np.ndarray:
        u = np.full(self.m, float(self.signal(t)))
        if self.constant_channels:
            u[list(self.constant_channels)] = 1.0
        return u


def _table_signal(path: Path) -> Tuple[ScalarSignal, Dict[str, float]]:
    try:
        with Path(path).open(newline="", encoding="utf-8") as handle:
            rows = [row for row in csv.reader(handle) if row and not row[0].startswith("#")]
    except OSError as exc:
        raise InputError(f"cannot read input table {path}: {exc}") from exc
    try:
        float(rows[0][0])
    except (IndexError, ValueError):
        rows = rows[1:]
    try:
        data = np.array([[float(v) for v in row[:2]] for row in rows])
    except ValueError as exc:
        raise InputError(f"{path}: input table must hold numeric (t, u) rows") from exc
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != 2:
        raise InputError(f"{path}: need at least two (t, u) rows")
    times, values = data[:, 0], data[:, 1]
    if np.any(np.diff(times) <= 0):
        raise InputError(f"{path}: table times must be strictly increasing")
    return (lambda t: float(np.interp(t, times, values))), {"rows": float(len(times))}


def make_input(
    tag: str,
    m: int,
    constant_channels: Sequence[int] = (),
    value: Optional[float] = None,
    table: Optional[Path] = None,
) -> InputSignal:
    """Build a signal from its tag.

    Tags: ``u1`` (10(sin(pi t) + 1)), ``u2`` (5 t e^-t), ``fhn-i0``
    (5e4 t^3 e^-t), ``zero``, ``constant`` (needs ``value``) and ``table``
    (piecewise linear from a ``t, u`` CSV).
    """

    params: Dict[str, float] = {}
    if tag in BUILTIN_SIGNALS:
        signal = BUILTIN_SIGNALS[tag]
    elif tag == "constant":
        if value is None:
            raise InputError("constant input needs a value")
        level = float(value)
        signal = lambda t: level  # noqa: E731
        params["value"] = level
    elif tag == "table":
        if table is None:
            raise InputError("table input needs a CSV path")
        signal, params = _table_signal(table)
    else:
        raise InputError(
            f"unknown input {tag!r}; expected one of {sorted([*BUILTIN_SIGNALS, 'constant', 'table'])}"
        )
    return InputSignal(tag=tag, m=m, signal=signal, constant_channels=tuple(constant_channels), params=params)


def parse_input(spec: str, m: int, constant_channels: Sequence[int] = ()) -> InputSignal:
    """Parse a CLI input spec: a tag, ``constant:<value>`` or ``table:<path>``."""

    tag, _, rest = spec.partition(":")
    if tag == "constant":
        try:
            level = float(rest)
        except ValueError as exc:
            raise InputError(f"bad constant input {spec!r}") from exc
        return make_input(tag, m, constant_channels, value=level)
    if tag == "table":
        return make_input(tag, m, constant_channels, table=Path(rest))
    return make_input(tag, m, constant_channels)
